#ifndef MLBL_MODEL_H
#define MLBL_MODEL_H

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mlbl/clustering.h"
#include "mlbl/common.h"
#include "mlbl/corpus.h"
#include "mlbl/morphology.h"

namespace mlbl {

/// Selects the model variant: the two additive flags choose between LBL
/// (neither), +c (context), +o (output) and ++ (both); class_based adds the
/// class decomposition (the CLBL family).
struct ModelConfig {
  int order = 4;
  int dim = 0;
  bool context_additive = false;
  bool output_additive = false;
  bool class_based = true;

  void validate() const;
  // "LBL", "CLBL+c", "LBL++", ...
  std::string variant() const;
  bool operator==(const ModelConfig&) const = default;
};

struct BlockRef {
  std::string name;
  Real* data;
  size_t size;
  bool is_bias;
};

struct ConstBlockRef {
  std::string name;
  const Real* data;
  size_t size;
  bool is_bias;
};

/// Trainable parameters. Gradients and AdaGrad accumulators share this shape.
struct ParameterBlocks {
  std::vector<Matrix> context_transforms;  // C_j, d x d, j = 1..n-1 (oldest first)
  Table context_factors;                   // Q^(f); one row per word when not additive
  Table target_factors;                    // R^(f); one row per word when not additive
  Vector word_bias;                        // b
  Table class_vectors;                     // S, empty for classless models
  Vector class_bias;                       // t

  void set_zero();
  // Blocks in serialization order: C_1..C_{n-1}, Qf, Rf, b, S, t.
  std::vector<BlockRef> blocks();
  std::vector<ConstBlockRef> blocks() const;
  size_t num_values() const;
  bool operator==(const ParameterBlocks& other) const;
};

struct ModelParameters : ParameterBlocks {
  // Compiled word tables Q = M Q^(f) and R = M R^(f); only materialized for
  // the additive sides.
  Table context_words;
  Table target_words;
};

class Model {
 public:
  // Allocates zero-valued parameters of the right shapes.
  Model(ModelConfig config, Vocabulary vocab, Factorization factorization,
        std::optional<ClassPartition> partition);

  const ModelConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  const Factorization& factorization() const { return factorization_; }
  const ClassPartition* partition() const { return partition_ ? &*partition_ : nullptr; }
  const ModelParameters& params() const { return params_; }
  ModelParameters& params() { return params_; }

  // Rebuilds the compiled word tables from the factor tables.
  void compile();

  // Word-level tables used for scoring: compiled when additive, the parameter
  // table itself otherwise.
  const Table& context_table() const {
    return config_.context_additive ? params_.context_words : params_.context_factors;
  }
  const Table& target_table() const {
    return config_.output_additive ? params_.target_words : params_.target_factors;
  }

  // Classes with at least one predictable member; the class softmax ranges
  // over these.
  std::span<const ClassId> class_scope() const { return class_scope_; }
  std::span<const WordId> scorable_members(ClassId c) const { return scorable_members_.at(c); }
  std::span<const WordId> scorable_words() const { return scorable_words_; }

 private:
  ModelConfig config_;
  Vocabulary vocab_;
  Factorization factorization_;
  std::optional<ClassPartition> partition_;
  ModelParameters params_;
  std::vector<ClassId> class_scope_;
  std::vector<std::vector<WordId>> scorable_members_;
  std::vector<WordId> scorable_words_;
};

struct PredictionState {
  Vector p;
  uint64_t context_key = 0;
};

struct QueryCounters {
  uint64_t score_computations = 0;
  uint64_t predictions = 0;
};

uint64_t context_key(std::span<const WordId> context);

// p = sum_j C_j^T q~_{context_j}.
PredictionState predict(const Model& model, std::span<const WordId> context);
// Same, from explicit context vectors (e.g. composed for OOV words).
PredictionState predict_from_vectors(const Model& model, std::span<const Vector> context);

// nu(w) = p . r~_w + b_w
Real score_word(const Model& model, const Vector& p, WordId w);
// tau(c) = p . s_c + t_c
Real score_class(const Model& model, const Vector& p, ClassId c);

// Max-shifted, accumulated in long double.
Real log_sum_exp(std::span<const Real> values);

Real class_log_normalizer(const Model& model, const Vector& p, QueryCounters* counters = nullptr);
Real word_log_normalizer(const Model& model, const Vector& p, ClassId c,
                         QueryCounters* counters = nullptr);
Real full_log_normalizer(const Model& model, const Vector& p, QueryCounters* counters = nullptr);

/// Context-specific log-normalizers keyed by the context id tuple. Not
/// thread-safe: use one cache per worker. Values are produced by the same
/// functions as the uncached path, so lookups never change a result.
class NormalizerCache {
 public:
  struct Entry {
    Vector p;
    std::optional<Real> class_norm;
    std::optional<Real> full_norm;
    std::unordered_map<ClassId, Real> word_norm;
  };

  explicit NormalizerCache(size_t max_contexts = size_t{1} << 20) : max_contexts_(max_contexts) {}

  Entry& entry(const Model& model, std::span<const WordId> context, QueryCounters* counters = nullptr);
  size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }
  uint64_t hits() const { return hits_; }
  uint64_t misses() const { return misses_; }

 private:
  struct KeyHash {
    size_t operator()(const std::vector<WordId>& k) const { return context_key(k); }
  };
  std::unordered_map<std::vector<WordId>, Entry, KeyHash> entries_;
  size_t max_contexts_;
  uint64_t hits_ = 0;
  uint64_t misses_ = 0;
};

// Classless softmax over every word but PAD.
Real log_prob_full(const Model& model, std::span<const WordId> context, WordId w,
                   NormalizerCache* cache = nullptr, QueryCounters* counters = nullptr);
// log P(c_w|h) + log P(w|h, c_w).
Real log_prob_classed(const Model& model, std::span<const WordId> context, WordId w,
                      NormalizerCache* cache = nullptr, QueryCounters* counters = nullptr);
// Dispatches on config().class_based.
Real log_prob(const Model& model, std::span<const WordId> context, WordId w,
              NormalizerCache* cache = nullptr, QueryCounters* counters = nullptr);
Real log_prob_from_prediction(const Model& model, const Vector& p, WordId w,
                              QueryCounters* counters = nullptr);

// P(v|h) for every word id; PAD gets 0.
Vector full_distribution(const Model& model, std::span<const WordId> context);

// log P of every instance, in order. Work is split across `threads` workers,
// each with its own cache.
std::vector<Real> score_instances(const Model& model, const NGramSet& data, int threads = 1);
Real perplexity_of(const Model& model, const NGramSet& data, int threads = 1);

// Context vector for a word string: its compiled row when known; for unknown
// words either UNK's row or, with `compose_oov`, the sum of its known context
// factors (falling back to UNK when there are none).
Vector context_vector(const Model& model, std::string_view word, const PostHocMap* map,
                      bool compose_oov);

}  // namespace mlbl

#endif
