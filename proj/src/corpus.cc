#include "mlbl/corpus.h"

#include <algorithm>
#include <cmath>
#include <istream>
#include <locale>
#include <map>
#include <ostream>
#include <sstream>

namespace mlbl {

namespace {

// Decodes one UTF-8 code point starting at s[i]; returns its length, or 0 if
// the sequence is malformed.
size_t decode_utf8(std::string_view s, size_t i, char32_t& cp) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  size_t len;
  if (b0 < 0x80) {
    cp = b0;
    return 1;
  } else if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    return 0;
  }
  if (i + len > s.size()) return 0;
  for (size_t k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(s[i + k]);
    if ((b & 0xC0) != 0x80) return 0;
    cp = (cp << 6) | (b & 0x3F);
  }
  return len;
}

void encode_utf8(char32_t cp, std::string& out) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

const std::ctype<wchar_t>& wide_ctype() {
  static const std::locale loc = [] {
    try {
      return std::locale("C.UTF-8");
    } catch (const std::runtime_error&) {
      return std::locale::classic();
    }
  }();
  return std::use_facet<std::ctype<wchar_t>>(loc);
}

}  // namespace

std::string normalize_token(std::string_view token) {
  const auto& ctype = wide_ctype();
  std::string out;
  out.reserve(token.size());
  for (size_t i = 0; i < token.size();) {
    char32_t cp;
    size_t len = decode_utf8(token, i, cp);
    if (len == 0) {
      out += token[i++];
      continue;
    }
    if (cp >= U'0' && cp <= U'9') {
      out += '0';
    } else if (cp < 0x80) {
      out += static_cast<char>(cp >= U'A' && cp <= U'Z' ? cp + 32 : cp);
    } else {
      encode_utf8(static_cast<char32_t>(ctype.tolower(static_cast<wchar_t>(cp))), out);
    }
    i += len;
  }
  return out;
}

bool is_mostly_cyrillic(std::string_view token, double threshold) {
  size_t total = 0, cyrillic = 0;
  for (size_t i = 0; i < token.size();) {
    char32_t cp;
    size_t len = decode_utf8(token, i, cp);
    if (len == 0) {
      len = 1;
      cp = 0xFFFD;
    }
    ++total;
    if (cp >= 0x0400 && cp <= 0x052F) ++cyrillic;
    i += len;
  }
  return total > 0 && static_cast<double>(cyrillic) >= threshold * static_cast<double>(total);
}

std::vector<Sentence> read_sentences(std::istream& in, const ReadOptions& options) {
  std::vector<Sentence> sentences;
  std::string line, token;
  while (std::getline(in, line)) {
    std::istringstream tokens(line);
    Sentence sentence;
    while (tokens >> token) {
      if (options.cyrillic_filter && !is_mostly_cyrillic(token))
        sentence.emplace_back(kUnkSymbol);
      else
        sentence.push_back(normalize_token(token));
    }
    if (!sentence.empty()) sentences.push_back(std::move(sentence));
  }
  return sentences;
}

//////////////////////////////////////////////////////////////////////////////
// Vocabulary

Vocabulary::Vocabulary() {
  types_ = {std::string(kUnkSymbol), std::string(kPadSymbol)};
  counts_ = {0, 0};
  id_of_[types_[kUnkId]] = kUnkId;
  id_of_[types_[kPadId]] = kPadId;
}

Vocabulary Vocabulary::from_counts(std::vector<std::pair<std::string, int64_t>> entries,
                                   int64_t unk_count, double kappa) {
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  return from_ordered(std::move(entries), unk_count, kappa);
}

Vocabulary Vocabulary::from_ordered(std::vector<std::pair<std::string, int64_t>> entries,
                                    int64_t unk_count, double kappa) {
  Vocabulary vocab;
  vocab.kappa_ = kappa;
  vocab.counts_[kUnkId] = unk_count;
  vocab.token_count_ = unk_count;
  for (auto& [type, count] : entries) {
    if (type == kUnkSymbol || type == kPadSymbol)
      throw DataError("reserved symbol '" + type + "' cannot be a regular vocabulary entry");
    if (count < 1) throw DataError("vocabulary type '" + type + "' has non-positive count");
    const auto id = static_cast<WordId>(vocab.types_.size());
    if (!vocab.id_of_.emplace(type, id).second)
      throw DataError("duplicate vocabulary type '" + type + "'");
    vocab.types_.push_back(std::move(type));
    vocab.counts_.push_back(count);
    vocab.token_count_ += count;
  }
  return vocab;
}

std::optional<WordId> Vocabulary::find(std::string_view type) const {
  auto it = id_of_.find(std::string(type));
  if (it == id_of_.end()) return std::nullopt;
  return it->second;
}

WordId Vocabulary::lookup(std::string_view type) const {
  auto id = find(type);
  // PAD can never appear as a corpus token.
  if (!id || *id == kPadId) return kUnkId;
  return *id;
}

std::vector<WordId> Vocabulary::map(const Sentence& sentence) const {
  std::vector<WordId> ids;
  ids.reserve(sentence.size());
  for (const auto& token : sentence) ids.push_back(lookup(token));
  return ids;
}

void Vocabulary::write(std::ostream& out) const {
  for (size_t i = 0; i < types_.size(); ++i)
    out << i << '\t' << types_[i] << '\t' << counts_[i] << '\n';
}

Vocabulary Vocabulary::read(std::istream& in) {
  std::vector<std::pair<std::string, int64_t>> entries;
  int64_t unk_count = 0;
  std::string line;
  size_t line_no = 0, rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = "vocabulary line " + std::to_string(line_no);
    std::istringstream fields(line);
    std::string id_field, type, count_field;
    if (!std::getline(fields, id_field, '\t') || !std::getline(fields, type, '\t') ||
        !std::getline(fields, count_field))
      throw DataError(where + ": expected id<TAB>type<TAB>count");
    int64_t id, count;
    try {
      id = std::stoll(id_field);
      count = std::stoll(count_field);
    } catch (const std::exception&) {
      throw DataError(where + ": non-numeric field");
    }
    if (id != static_cast<int64_t>(rows)) throw DataError(where + ": ids must be dense and ordered");
    if (rows == kUnkId) {
      if (type != kUnkSymbol) throw DataError(where + ": expected the UNK row");
      unk_count = count;
    } else if (rows == kPadId) {
      if (type != kPadSymbol) throw DataError(where + ": expected the PAD row");
    } else {
      entries.emplace_back(type, count);
    }
    ++rows;
  }
  if (rows < 2) throw DataError("vocabulary file is missing the reserved UNK/PAD rows");
  return from_ordered(std::move(entries), unk_count);
}

Vocabulary build_vocabulary(const std::vector<Sentence>& sentences, double kappa, uint64_t seed) {
  if (!(kappa >= 0.0 && kappa <= 1.0)) throw DataError("kappa must lie in [0, 1]");
  std::map<std::string, int64_t> counts;
  int64_t unk_count = 0;
  size_t tokens = 0;
  for (const auto& sentence : sentences) {
    for (const auto& token : sentence) {
      ++tokens;
      if (token == kUnkSymbol || token == kPadSymbol)
        ++unk_count;
      else
        ++counts[token];
    }
  }
  if (tokens == 0) throw DataError("no data: the training corpus contains no tokens");

  // std::map iterates lexicographically, so the singleton list is sorted.
  std::vector<std::string> singletons;
  for (const auto& [type, count] : counts)
    if (count == 1) singletons.push_back(type);
  Rng rng(seed);
  rng.shuffle(std::span<std::string>(singletons));
  const auto pruned = static_cast<size_t>(std::llround(kappa * static_cast<double>(singletons.size())));
  for (size_t i = 0; i < pruned; ++i) {
    counts.erase(singletons[i]);
    ++unk_count;
  }

  std::vector<std::pair<std::string, int64_t>> entries(counts.begin(), counts.end());
  return Vocabulary::from_counts(std::move(entries), unk_count, kappa);
}

//////////////////////////////////////////////////////////////////////////////
// n-grams

NGramSet::NGramSet(int order) : order_(order) {
  if (order < 2) throw DataError("n-gram order must be at least 2");
}

void NGramSet::add_sentence(std::span<const WordId> sentence) {
  for (size_t i = 0; i < sentence.size(); ++i) {
    for (int j = order_ - 1; j >= 1; --j) {
      const auto back = static_cast<size_t>(j);
      data_.push_back(i >= back ? sentence[i - back] : kPadId);
    }
    data_.push_back(sentence[i]);
  }
}

NGramSet extract_ngrams(std::span<const WordId> sentence, int order) {
  NGramSet set(order);
  set.add_sentence(sentence);
  return set;
}

NGramSet extract_ngrams(const std::vector<Sentence>& sentences, const Vocabulary& vocab, int order) {
  NGramSet set(order);
  for (const auto& sentence : sentences) {
    auto ids = vocab.map(sentence);
    set.add_sentence(ids);
  }
  return set;
}

}  // namespace mlbl
