#include "mlbl/morphology.h"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

namespace mlbl {

namespace {

std::optional<Morpheme> split_factor(const std::string& item) {
  const auto bar = item.rfind('|');
  if (bar == std::string::npos || bar == 0 || bar + 1 == item.size()) return std::nullopt;
  return Morpheme{item.substr(0, bar), item.substr(bar + 1)};
}

}  // namespace

Segmentations parse_segmentations(std::istream& in, bool normalize) {
  Segmentations segs;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = "segmentation line " + std::to_string(line_no);
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0)
      throw DataError(where + ": expected word<TAB>form|label ...");
    std::string word = line.substr(0, tab);
    if (normalize) word = normalize_token(word);

    std::vector<Morpheme> morphemes;
    std::istringstream items(line.substr(tab + 1));
    std::string item;
    while (items >> item) {
      auto m = split_factor(item);
      if (!m) throw DataError(where + ": malformed factor '" + item + "'");
      if (m->label == kSurfaceLabel)
        throw DataError(where + ": label 'surface' is reserved");
      if (normalize) m->form = normalize_token(m->form);
      morphemes.push_back(std::move(*m));
    }
    if (morphemes.empty()) throw DataError(where + ": no factors given");
    if (!segs.emplace(word, std::move(morphemes)).second)
      throw DataError(where + ": duplicate entry for '" + word + "'");
  }
  return segs;
}

FactorId FactorVocabulary::add(const std::string& factor) {
  auto [it, inserted] = id_of_.emplace(factor, static_cast<FactorId>(factors_.size()));
  if (inserted) factors_.push_back(factor);
  return it->second;
}

std::optional<FactorId> FactorVocabulary::find(std::string_view factor) const {
  auto it = id_of_.find(std::string(factor));
  if (it == id_of_.end()) return std::nullopt;
  return it->second;
}

std::vector<FactorCount> factor_counts(std::span<const FactorId> mu) {
  std::vector<FactorId> sorted(mu.begin(), mu.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<FactorCount> row;
  for (FactorId f : sorted) {
    if (!row.empty() && row.back().factor == f)
      ++row.back().multiplicity;
    else
      row.push_back({f, 1});
  }
  return row;
}

WordFactorization::WordFactorization(std::vector<std::vector<FactorId>> mu, size_t num_factors)
    : mu_(std::move(mu)), num_factors_(num_factors) {
  rows_.reserve(mu_.size());
  for (size_t w = 0; w < mu_.size(); ++w) {
    if (mu_[w].empty()) throw Error("word " + std::to_string(w) + " has an empty factorization");
    for (FactorId f : mu_[w])
      if (f < 0 || static_cast<size_t>(f) >= num_factors_)
        throw Error("factor id " + std::to_string(f) + " out of range");
    rows_.push_back(factor_counts(mu_[w]));
  }
}

WordFactorization WordFactorization::identity(size_t num_words) {
  std::vector<std::vector<FactorId>> mu(num_words);
  for (size_t w = 0; w < num_words; ++w) mu[w] = {static_cast<FactorId>(w)};
  return WordFactorization(std::move(mu), num_words);
}

bool WordFactorization::is_identity() const {
  if (num_factors_ != mu_.size()) return false;
  for (size_t w = 0; w < mu_.size(); ++w)
    if (mu_[w].size() != 1 || mu_[w][0] != static_cast<FactorId>(w)) return false;
  return true;
}

Factorization build_factorization(const Vocabulary& vocab, const Segmentations* segs) {
  Factorization fz;
  std::vector<std::vector<FactorId>> mu(vocab.size());
  for (size_t w = 0; w < vocab.size(); ++w) {
    const std::string& type = vocab.type(static_cast<WordId>(w));
    mu[w].push_back(fz.factors.add(type + "|" + std::string(kSurfaceLabel)));
    if (!segs || w == static_cast<size_t>(kUnkId) || w == static_cast<size_t>(kPadId)) continue;
    auto it = segs->find(type);
    if (it == segs->end()) continue;
    for (const auto& m : it->second) mu[w].push_back(fz.factors.add(m.factor()));
  }
  fz.words = WordFactorization(std::move(mu), fz.factors.size());
  return fz;
}

void compose_row(const Table& factor_table, std::span<const FactorCount> row,
                 Eigen::Ref<Vector> out) {
  out.setZero();
  for (const auto& [f, m] : row) out += static_cast<Real>(m) * factor_table.row(f).transpose();
}

Vector compose_vector(const Table& factor_table, std::span<const FactorId> mu) {
  if (mu.empty()) throw Error("cannot compose a word vector from an empty factorization");
  for (FactorId f : mu)
    if (f < 0 || f >= factor_table.rows()) throw Error("factor id out of range");
  Vector out(factor_table.cols());
  compose_row(factor_table, factor_counts(mu), out);
  return out;
}

Table compile_word_table(const WordFactorization& m, const Table& factor_table) {
  if (static_cast<size_t>(factor_table.rows()) != m.num_factors())
    throw MismatchError("factor table has " + std::to_string(factor_table.rows()) +
                        " rows but M has " + std::to_string(m.num_factors()) + " columns");
  Table out(m.num_words(), factor_table.cols());
  Vector row(factor_table.cols());
  for (size_t w = 0; w < m.num_words(); ++w) {
    compose_row(factor_table, m.row(static_cast<WordId>(w)), row);
    out.row(w) = row.transpose();
  }
  return out;
}

std::span<const FactorId> PostHocMap::known_factors(std::string_view word) const {
  auto it = mu_prime.find(std::string(word));
  if (it == mu_prime.end()) return {};
  return it->second;
}

PostHocMap build_post_hoc_map(const Segmentations& segs, const FactorVocabulary& factors) {
  PostHocMap map;
  for (const auto& [word, morphemes] : segs) {
    std::vector<FactorId> known;
    if (auto f = factors.find(word + "|" + std::string(kSurfaceLabel))) known.push_back(*f);
    for (const auto& m : morphemes)
      if (auto f = factors.find(m.factor())) known.push_back(*f);
    map.mu_prime.emplace(word, std::move(known));
  }
  return map;
}

Vector oov_vector(std::string_view word, const PostHocMap& map, const Table& context_factors,
                  const Table& target_factors, const Vector& q_unk, const Vector& r_unk) {
  const auto known = map.known_factors(word);
  Vector u(q_unk.size() + r_unk.size());
  if (known.empty()) {
    u << q_unk, r_unk;
  } else {
    u << compose_vector(context_factors, known), compose_vector(target_factors, known);
  }
  return u;
}

void write_vectors(std::ostream& out, std::span<const std::string> names, const Table& table) {
  char buf[32];
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    out << names[i] << '\t';
    for (Eigen::Index k = 0; k < table.cols(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", table(i, k));
      if (k) out << ' ';
      out << buf;
    }
    out << '\n';
  }
}

void write_factor_vocabulary(std::ostream& out, const FactorVocabulary& factors) {
  for (size_t f = 0; f < factors.size(); ++f)
    out << f << '\t' << factors.factor(static_cast<FactorId>(f)) << '\n';
}

void write_mu_table(std::ostream& out, const Vocabulary& vocab, const Factorization& fz) {
  for (size_t w = 0; w < vocab.size(); ++w) {
    out << vocab.type(static_cast<WordId>(w)) << '\t';
    bool first = true;
    for (FactorId f : fz.words.mu(static_cast<WordId>(w))) {
      if (!first) out << ' ';
      out << fz.factors.factor(f);
      first = false;
    }
    out << '\n';
  }
}

Factorization read_mu_table(std::istream& in, const Vocabulary& vocab) {
  std::vector<std::optional<std::vector<std::string>>> items(vocab.size());
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = "mu table line " + std::to_string(line_no);
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError(where + ": expected word<TAB>factors");
    const std::string word = line.substr(0, tab);
    auto id = vocab.find(word);
    if (!id) throw MismatchError(where + ": word '" + word + "' is not in the vocabulary");
    if (items[*id]) throw DataError(where + ": duplicate entry for '" + word + "'");
    std::vector<std::string> factors;
    std::istringstream fields(line.substr(tab + 1));
    std::string factor;
    while (fields >> factor) {
      if (!split_factor(factor)) throw DataError(where + ": malformed factor '" + factor + "'");
      factors.push_back(factor);
    }
    if (factors.empty()) throw DataError(where + ": empty factorization");
    items[*id] = std::move(factors);
  }

  Factorization fz;
  std::vector<std::vector<FactorId>> mu(vocab.size());
  for (size_t w = 0; w < vocab.size(); ++w) {
    if (!items[w])
      throw MismatchError("mu table has no entry for vocabulary word '" +
                          vocab.type(static_cast<WordId>(w)) + "'");
    for (const auto& factor : *items[w]) mu[w].push_back(fz.factors.add(factor));
  }
  fz.words = WordFactorization(std::move(mu), fz.factors.size());
  return fz;
}

}  // namespace mlbl
