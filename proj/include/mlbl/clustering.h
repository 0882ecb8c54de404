#ifndef MLBL_CLUSTERING_H
#define MLBL_CLUSTERING_H

#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "mlbl/common.h"
#include "mlbl/corpus.h"

namespace mlbl {

/// A hard partition of the vocabulary into non-empty classes with dense ids.
class ClassPartition {
 public:
  ClassPartition() = default;
  explicit ClassPartition(std::vector<ClassId> class_of);

  static ClassPartition single(size_t num_words);

  size_t num_words() const { return class_of_.size(); }
  size_t num_classes() const { return members_.size(); }
  ClassId class_of(WordId w) const { return class_of_.at(w); }
  std::span<const WordId> members(ClassId c) const { return members_.at(c); }
  const std::vector<ClassId>& assignment() const { return class_of_; }

  // `class_id<TAB>word`, grouped by class.
  void write(std::ostream& out, const Vocabulary& vocab) const;

  bool operator==(const ClassPartition& other) const { return class_of_ == other.class_of_; }

 private:
  std::vector<ClassId> class_of_;
  std::vector<std::vector<WordId>> members_;
};

// round(sqrt(vocab_size)), at least 1.
int default_num_classes(size_t vocab_size);

/// Word bigram statistics with PAD as the left context of every sentence.
struct BigramCounts {
  size_t num_words = 0;
  // Token count per word; PAD counts once per sentence.
  std::vector<int64_t> unigram;
  std::vector<std::vector<std::pair<WordId, int64_t>>> successors;
  std::vector<std::vector<std::pair<WordId, int64_t>>> predecessors;
  int64_t total = 0;

  static BigramCounts from_sentences(std::span<const std::vector<WordId>> sentences, size_t num_words);
};

// Average mutual information of adjacent class pairs, in nats.
double average_mutual_information(const BigramCounts& counts, const ClassPartition& partition);

struct ExchangeMove {
  WordId word;
  ClassId from;
  ClassId to;
  double gain;
};

/// Exchange-algorithm clustering: frequency-rank initialization, then passes
/// moving each word to the class with the highest AMI, until a pass makes no
/// move or `max_iters` passes have run. Equal gains keep the current class,
/// otherwise the lowest class id wins. A class is never emptied.
ClassPartition brown_cluster(const BigramCounts& counts, int num_classes, int max_iters,
                             const std::function<void(const ExchangeMove&)>& on_move = {});

// Contiguous bins of near-equal unigram mass over words sorted by descending count.
ClassPartition frequency_bin(const Vocabulary& vocab, int num_classes);

// `class_id<TAB>word` lines covering the vocabulary exactly once. Class ids may
// be any integers; they are renumbered densely in ascending order.
ClassPartition load_partition(std::istream& in, const Vocabulary& vocab);

}  // namespace mlbl

#endif
