#ifndef MLBL_CORPUS_H
#define MLBL_CORPUS_H

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mlbl/common.h"

namespace mlbl {

inline constexpr WordId kUnkId = 0;
inline constexpr WordId kPadId = 1;
inline constexpr std::string_view kUnkSymbol = "<unk>";
inline constexpr std::string_view kPadSymbol = "<s>";

typedef std::vector<std::string> Sentence;

// Lowercases (UTF-8 aware) and maps every ASCII digit to '0'.
std::string normalize_token(std::string_view token);

// True when at least `threshold` of the token's code points are Cyrillic.
bool is_mostly_cyrillic(std::string_view token, double threshold = 0.8);

struct ReadOptions {
  // Replace tokens with fewer than 80% Cyrillic code points by the UNK symbol.
  bool cyrillic_filter = false;
};

// One sentence per line, whitespace-delimited, tokens normalized.
std::vector<Sentence> read_sentences(std::istream& in, const ReadOptions& options = {});

/// Word types with dense integer ids. Ids 0 and 1 are reserved for UNK and the
/// sentence-boundary padding symbol; the remaining types are ordered by
/// descending training count, ties broken lexicographically.
///
/// PAD is never a prediction target, so it carries a zero count and is excluded
/// from every normalization scope. A finalized vocabulary is immutable.
class Vocabulary {
 public:
  Vocabulary();

  // `entries` excludes the reserved symbols; `unk_count` is the UNK mass.
  static Vocabulary from_counts(std::vector<std::pair<std::string, int64_t>> entries,
                                int64_t unk_count, double kappa = 0.0);

  size_t size() const { return types_.size(); }
  // Number of words that can be predicted (everything but PAD).
  size_t scorable_size() const { return types_.size() - 1; }
  static bool scorable(WordId w) { return w != kPadId; }

  WordId unk_id() const { return kUnkId; }
  WordId pad_id() const { return kPadId; }
  double kappa() const { return kappa_; }

  std::optional<WordId> find(std::string_view type) const;
  // Unknown types map to UNK.
  WordId lookup(std::string_view type) const;
  const std::string& type(WordId w) const { return types_.at(w); }
  int64_t count(WordId w) const { return counts_.at(w); }
  const std::vector<int64_t>& counts() const { return counts_; }
  const std::vector<std::string>& types() const { return types_; }
  int64_t token_count() const { return token_count_; }

  std::vector<WordId> map(const Sentence& sentence) const;

  // `id<TAB>type<TAB>count`, one line per type.
  void write(std::ostream& out) const;
  static Vocabulary read(std::istream& in);

  bool operator==(const Vocabulary& other) const {
    return types_ == other.types_ && counts_ == other.counts_;
  }

 private:
  static Vocabulary from_ordered(std::vector<std::pair<std::string, int64_t>> entries,
                                 int64_t unk_count, double kappa = 0.0);

  std::vector<std::string> types_;
  std::vector<int64_t> counts_;
  std::unordered_map<std::string, WordId> id_of_;
  int64_t token_count_ = 0;
  double kappa_ = 0.0;
};

// Counts all types and replaces round(kappa * S) of the S singleton types,
// chosen by a seeded shuffle of the lexicographically sorted singleton list,
// by UNK.
Vocabulary build_vocabulary(const std::vector<Sentence>& sentences, double kappa, uint64_t seed);

/// Fixed-order n-gram instances stored contiguously: each instance is n ids,
/// the n-1 context ids (oldest first) followed by the target.
class NGramSet {
 public:
  explicit NGramSet(int order);

  // One instance per token; contexts before the start are padded with PAD.
  void add_sentence(std::span<const WordId> sentence);

  int order() const { return order_; }
  size_t size() const { return data_.size() / order_; }
  bool empty() const { return data_.empty(); }
  std::span<const WordId> context(size_t i) const {
    return {data_.data() + i * order_, static_cast<size_t>(order_ - 1)};
  }
  WordId target(size_t i) const { return data_[i * order_ + order_ - 1]; }

 private:
  int order_;
  std::vector<WordId> data_;
};

NGramSet extract_ngrams(std::span<const WordId> sentence, int order);
NGramSet extract_ngrams(const std::vector<Sentence>& sentences, const Vocabulary& vocab, int order);

}  // namespace mlbl

#endif
