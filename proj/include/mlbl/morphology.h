#ifndef MLBL_MORPHOLOGY_H
#define MLBL_MORPHOLOGY_H

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mlbl/common.h"
#include "mlbl/corpus.h"

namespace mlbl {

inline constexpr std::string_view kSurfaceLabel = "surface";

struct Morpheme {
  std::string form;
  std::string label;

  // The labelled factor string, e.g. "perfect|stem".
  std::string factor() const { return form + "|" + label; }
  bool operator==(const Morpheme&) const = default;
};

typedef std::map<std::string, std::vector<Morpheme>> Segmentations;

// Reads `word<TAB>form|label( form|label)*` lines. Words and forms are passed
// through normalize_token when `normalize` is set. The "surface" label is
// reserved and rejected.
Segmentations parse_segmentations(std::istream& in, bool normalize = true);

class FactorVocabulary {
 public:
  FactorId add(const std::string& factor);
  std::optional<FactorId> find(std::string_view factor) const;
  const std::string& factor(FactorId f) const { return factors_.at(f); }
  size_t size() const { return factors_.size(); }
  const std::vector<std::string>& factors() const { return factors_; }

  bool operator==(const FactorVocabulary& other) const { return factors_ == other.factors_; }

 private:
  std::vector<std::string> factors_;
  std::unordered_map<std::string, FactorId> id_of_;
};

struct FactorCount {
  FactorId factor;
  int32_t multiplicity;
  bool operator==(const FactorCount&) const = default;
};

/// The word->factor map mu and the sparse count matrix M it induces. Rows of
/// M are kept sorted by factor id; composition always sums in that order so
/// that every route to a word vector produces the same bits.
class WordFactorization {
 public:
  WordFactorization() = default;
  // Each mu entry must be non-empty with ids below `num_factors`.
  WordFactorization(std::vector<std::vector<FactorId>> mu, size_t num_factors);

  static WordFactorization identity(size_t num_words);

  size_t num_words() const { return mu_.size(); }
  size_t num_factors() const { return num_factors_; }
  std::span<const FactorId> mu(WordId w) const { return mu_.at(w); }
  std::span<const FactorCount> row(WordId w) const { return rows_.at(w); }
  bool is_identity() const;

  bool operator==(const WordFactorization& other) const {
    return num_factors_ == other.num_factors_ && mu_ == other.mu_;
  }

 private:
  std::vector<std::vector<FactorId>> mu_;
  std::vector<std::vector<FactorCount>> rows_;
  size_t num_factors_ = 0;
};

std::vector<FactorCount> factor_counts(std::span<const FactorId> mu);

struct Factorization {
  FactorVocabulary factors;
  WordFactorization words;
};

// mu(v) = {v|surface} + morphemes(v). Passing no segmentations gives the
// identity factorization (|F| = |V|, factor id == word id).
Factorization build_factorization(const Vocabulary& vocab, const Segmentations* segs);

// Sum over f in mu of multiplicity(f) * table.row(f).
Vector compose_vector(const Table& factor_table, std::span<const FactorId> mu);
// Same sum for a canonical (sorted) row of M, written into `out`.
void compose_row(const Table& factor_table, std::span<const FactorCount> row,
                 Eigen::Ref<Vector> out);

// R = M * R^(f).
Table compile_word_table(const WordFactorization& m, const Table& factor_table);

/// Factor ids for words outside the vocabulary, restricted to known factors.
struct PostHocMap {
  std::unordered_map<std::string, std::vector<FactorId>> mu_prime;

  // Empty when the word is unmapped or none of its factors are known.
  std::span<const FactorId> known_factors(std::string_view word) const;
};

PostHocMap build_post_hoc_map(const Segmentations& segs, const FactorVocabulary& factors);

// [sum of known context factor rows ; sum of known target factor rows], or
// [q_unk ; r_unk] when no factor of `word` is known.
Vector oov_vector(std::string_view word, const PostHocMap& map, const Table& context_factors,
                  const Table& target_factors, const Vector& q_unk, const Vector& r_unk);

// `name<TAB>v1 v2 ... vd`, full double precision.
void write_vectors(std::ostream& out, std::span<const std::string> names, const Table& table);

// Factor vocabulary (`id<TAB>factor`) and mu table (`word<TAB>f1 f2 ...`).
void write_factor_vocabulary(std::ostream& out, const FactorVocabulary& factors);
void write_mu_table(std::ostream& out, const Vocabulary& vocab, const Factorization& fz);
Factorization read_mu_table(std::istream& in, const Vocabulary& vocab);

}  // namespace mlbl

#endif
