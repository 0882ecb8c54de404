#ifndef MLBL_EVAL_H
#define MLBL_EVAL_H

#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mlbl/model.h"

namespace mlbl {

struct GroupStat {
  std::string label;
  size_t tokens = 0;
  Real nll = 0;    // summed negative log-probability, nats
  Real share = 0;  // fraction of all scored tokens
  Real ppl = 0;
};

struct EvalReport {
  size_t token_count = 0;
  Real total_nll = 0;
  Real total_ppl = 0;
  std::vector<GroupStat> groups;
};

// Natural-log probabilities of every token of `test`, sentence by sentence.
// Out-of-vocabulary tokens are scored as UNK.
std::vector<Real> score_corpus(const Model& model, const std::vector<Sentence>& test, int threads = 1);

// Totals over `log_probs`; the report has no groups.
EvalReport summarize(std::span<const Real> log_probs);
// Totals plus one group per distinct label; labels[i] belongs to log_probs[i].
// Groups are ordered by `order` when given (missing labels are skipped),
// otherwise lexicographically.
EvalReport summarize_groups(std::span<const Real> log_probs, std::span<const std::string> labels,
                            const std::vector<std::string>* order = nullptr);

EvalReport perplexity(const Model& model, const std::vector<Sentence>& test, int threads = 1);

// Laplace-smoothed unigram over the vocabulary's scorable words.
Real smoothed_unigram_log_prob(const Vocabulary& vocab, WordId w);
EvalReport unigram_perplexity(const Vocabulary& vocab, const std::vector<Sentence>& test);

typedef std::unordered_map<std::string, int64_t> TypeCounts;
TypeCounts count_types(const std::vector<Sentence>& sentences);

// "unseen" for a zero count, otherwise floor(log10(count)) as a string, so
// that bin "x" holds counts in [10^x, 10^(x+1)).
std::string frequency_bin_label(int64_t count);

// Groups test tokens by their training-corpus frequency.
EvalReport ppl_by_frequency(const Model& model, const std::vector<Sentence>& test,
                            const TypeCounts& train_counts, int threads = 1);

inline constexpr std::string_view kRestLabel = "Rest";

// `labels` must have the shape of `test`. Tokens labelled "_" (and, when
// `keep` is given, tokens whose label is not in it) are grouped under "Rest".
EvalReport ppl_by_label(const Model& model, const std::vector<Sentence>& test,
                        const std::vector<Sentence>& labels, const std::set<std::string>* keep = nullptr,
                        int threads = 1);

void write_report_table(std::ostream& out, const EvalReport& report, const std::string& group_title);
// One JSON object per line: the totals first, then one per group.
void write_report_jsonl(std::ostream& out, const EvalReport& report);

struct SimilarityPair {
  std::string first;
  std::string second;
  double rating;
};

// `word1<TAB>word2<TAB>rating` lines; words pass through normalize_token.
std::vector<SimilarityPair> read_similarity_dataset(std::istream& in);

enum class OovMode { compose, no_compose };

// [q~; r~] for a word. Unknown words get UNK's rows, or with OovMode::compose
// the sum of their known factors on each additive side.
Vector word_representation(const Model& model, std::string_view word, const PostHocMap* map, OovMode mode,
                           bool* is_oov = nullptr);

struct Cosine {
  double value;
  bool degenerate;  // one of the vectors is zero; value is then 0
};
Cosine cosine(const Vector& a, const Vector& b);

// Pearson correlation of average ranks; nullopt when either list is constant.
std::optional<double> spearman(std::span<const double> a, std::span<const double> b);

struct SimilarityResult {
  std::vector<double> model_scores;
  std::vector<double> human_scores;
  std::optional<double> rho;
  size_t oov_count = 0;  // distinct dataset words outside the vocabulary
  size_t degenerate_pairs = 0;
};

SimilarityResult evaluate_similarity(const Model& model, const std::vector<SimilarityPair>& dataset,
                                     const PostHocMap* map, OovMode mode);

// [Q | R] for every word id.
Table concatenated_table(const Model& model);

struct Neighbor {
  WordId word;
  double similarity;
};

// Top-k rows of `table` by cosine with `query`, ties broken by lower id.
std::vector<Neighbor> nearest_neighbors(const Table& table, const Vector& query, size_t k,
                                        std::optional<WordId> exclude = std::nullopt);

}  // namespace mlbl

#endif
