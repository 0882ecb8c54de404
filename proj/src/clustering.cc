#include "mlbl/clustering.h"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_map>

namespace mlbl {

ClassPartition::ClassPartition(std::vector<ClassId> class_of) : class_of_(std::move(class_of)) {
  ClassId max_class = -1;
  for (ClassId c : class_of_) {
    if (c < 0) throw Error("negative class id");
    max_class = std::max(max_class, c);
  }
  members_.resize(static_cast<size_t>(max_class + 1));
  for (size_t w = 0; w < class_of_.size(); ++w) members_[class_of_[w]].push_back(static_cast<WordId>(w));
  for (size_t c = 0; c < members_.size(); ++c)
    if (members_[c].empty()) throw Error("class " + std::to_string(c) + " is empty");
}

ClassPartition ClassPartition::single(size_t num_words) {
  return ClassPartition(std::vector<ClassId>(num_words, 0));
}

void ClassPartition::write(std::ostream& out, const Vocabulary& vocab) const {
  for (size_t c = 0; c < members_.size(); ++c)
    for (WordId w : members_[c]) out << c << '\t' << vocab.type(w) << '\n';
}

int default_num_classes(size_t vocab_size) {
  return std::max(1, static_cast<int>(std::lround(std::sqrt(static_cast<double>(vocab_size)))));
}

BigramCounts BigramCounts::from_sentences(std::span<const std::vector<WordId>> sentences,
                                          size_t num_words) {
  std::vector<std::map<WordId, int64_t>> succ(num_words);
  BigramCounts counts;
  counts.num_words = num_words;
  counts.unigram.assign(num_words, 0);
  for (const auto& sentence : sentences) {
    if (sentence.empty()) continue;
    WordId prev = kPadId;
    ++counts.unigram[kPadId];
    for (WordId w : sentence) {
      ++counts.unigram[w];
      ++succ[prev][w];
      ++counts.total;
      prev = w;
    }
  }
  counts.successors.resize(num_words);
  counts.predecessors.resize(num_words);
  for (size_t u = 0; u < num_words; ++u) {
    for (const auto& [w, n] : succ[u]) {
      counts.successors[u].emplace_back(w, n);
      counts.predecessors[w].emplace_back(static_cast<WordId>(u), n);
    }
  }
  return counts;
}

namespace {

inline double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

// Class bigram table with marginals; objective(N) = N * AMI - N log N.
struct ClassStats {
  size_t k = 0;
  std::vector<int64_t> bigram;  // k x k
  std::vector<int64_t> left;    // occurrences as the first element
  std::vector<int64_t> right;   // occurrences as the second element

  int64_t& at(size_t a, size_t b) { return bigram[a * k + b]; }
  int64_t at(size_t a, size_t b) const { return bigram[a * k + b]; }

  ClassStats(const BigramCounts& counts, const std::vector<ClassId>& class_of, size_t num_classes)
      : k(num_classes), bigram(num_classes * num_classes, 0), left(num_classes, 0), right(num_classes, 0) {
    for (size_t u = 0; u < counts.num_words; ++u) {
      for (const auto& [w, n] : counts.successors[u]) {
        at(class_of[u], class_of[w]) += n;
        left[class_of[u]] += n;
        right[class_of[w]] += n;
      }
    }
  }

  double objective() const {
    double sum = 0.0;
    for (int64_t n : bigram) sum += xlogx(static_cast<double>(n));
    for (size_t c = 0; c < k; ++c)
      sum -= xlogx(static_cast<double>(left[c])) + xlogx(static_cast<double>(right[c]));
    return sum;
  }
};

}  // namespace

double average_mutual_information(const BigramCounts& counts, const ClassPartition& partition) {
  if (counts.total == 0) return 0.0;
  ClassStats stats(counts, partition.assignment(), partition.num_classes());
  const auto total = static_cast<double>(counts.total);
  return (stats.objective() + xlogx(total)) / total;
}

ClassPartition brown_cluster(const BigramCounts& counts, int num_classes, int max_iters,
                             const std::function<void(const ExchangeMove&)>& on_move) {
  const size_t num_words = counts.num_words;
  const size_t active = static_cast<size_t>(
      std::count_if(counts.unigram.begin(), counts.unigram.end(), [](int64_t n) { return n > 0; }));
  if (num_classes < 1) throw DataError("number of classes must be positive");
  if (static_cast<size_t>(num_classes) > active)
    throw DataError("requested " + std::to_string(num_classes) + " classes but only " +
                    std::to_string(active) + " word types occur");
  const auto k = static_cast<size_t>(num_classes);

  std::vector<WordId> by_freq(num_words);
  std::iota(by_freq.begin(), by_freq.end(), 0);
  std::stable_sort(by_freq.begin(), by_freq.end(),
                   [&](WordId a, WordId b) { return counts.unigram[a] > counts.unigram[b]; });
  std::vector<ClassId> class_of(num_words);
  std::vector<int64_t> class_size(k, 0);
  for (size_t rank = 0; rank < num_words; ++rank) {
    class_of[by_freq[rank]] = static_cast<ClassId>(rank % k);
    ++class_size[rank % k];
  }
  if (k == 1 || k >= num_words) return ClassPartition(std::move(class_of));

  ClassStats stats(counts, class_of, k);
  std::vector<int64_t> succ_by_class(k, 0), pred_by_class(k, 0);
  std::vector<size_t> succ_touched, pred_touched;
  std::vector<double> gains(k);

  for (int iter = 0; iter < max_iters; ++iter) {
    size_t moves = 0;
    for (size_t wi = 0; wi < num_words; ++wi) {
      const auto w = static_cast<WordId>(wi);
      const ClassId from = class_of[w];
      if (class_size[from] == 1) continue;

      // Neighbour mass by class, excluding the self bigram.
      int64_t self = 0, out_mass = 0, in_mass = 0;
      succ_touched.clear();
      pred_touched.clear();
      for (const auto& [x, n] : counts.successors[w]) {
        out_mass += n;
        if (x == w) {
          self += n;
          continue;
        }
        const auto c = static_cast<size_t>(class_of[x]);
        if (succ_by_class[c] == 0) succ_touched.push_back(c);
        succ_by_class[c] += n;
      }
      for (const auto& [u, n] : counts.predecessors[w]) {
        in_mass += n;
        if (u == w) continue;
        const auto c = static_cast<size_t>(class_of[u]);
        if (pred_by_class[c] == 0) pred_touched.push_back(c);
        pred_by_class[c] += n;
      }
      if (out_mass == 0 && in_mass == 0) continue;

      // Take w out of its class.
      for (size_t c : succ_touched) stats.at(from, c) -= succ_by_class[c];
      for (size_t c : pred_touched) stats.at(c, from) -= pred_by_class[c];
      stats.at(from, from) -= self;
      stats.left[from] -= out_mass;
      stats.right[from] -= in_mass;

      // Objective change from inserting w into class t.
      auto gain_for = [&](size_t t) {
        double g = 0.0;
        for (size_t c : succ_touched) {
          if (c == t) continue;
          const double n = static_cast<double>(stats.at(t, c));
          g += xlogx(n + static_cast<double>(succ_by_class[c])) - xlogx(n);
        }
        for (size_t c : pred_touched) {
          if (c == t) continue;
          const double n = static_cast<double>(stats.at(c, t));
          g += xlogx(n + static_cast<double>(pred_by_class[c])) - xlogx(n);
        }
        const double diag = static_cast<double>(stats.at(t, t));
        g += xlogx(diag + static_cast<double>(succ_by_class[t] + pred_by_class[t] + self)) - xlogx(diag);
        const double l = static_cast<double>(stats.left[t]);
        const double r = static_cast<double>(stats.right[t]);
        g -= xlogx(l + static_cast<double>(out_mass)) - xlogx(l);
        g -= xlogx(r + static_cast<double>(in_mass)) - xlogx(r);
        return g;
      };

      const double stay = gain_for(static_cast<size_t>(from));
      size_t best = static_cast<size_t>(from);
      double best_gain = stay;
      const double tolerance = 1e-10 * std::max(1.0, std::abs(stay));
      for (size_t t = 0; t < k; ++t) {
        if (t == static_cast<size_t>(from)) continue;
        const double g = gain_for(t);
        if (g > best_gain + tolerance) {
          best = t;
          best_gain = g;
        }
      }

      // Put w into the chosen class.
      for (size_t c : succ_touched) {
        if (c != best) stats.at(best, c) += succ_by_class[c];
      }
      for (size_t c : pred_touched) {
        if (c != best) stats.at(c, best) += pred_by_class[c];
      }
      stats.at(best, best) += succ_by_class[best] + pred_by_class[best] + self;
      stats.left[best] += out_mass;
      stats.right[best] += in_mass;

      for (size_t c : succ_touched) succ_by_class[c] = 0;
      for (size_t c : pred_touched) pred_by_class[c] = 0;

      if (best != static_cast<size_t>(from)) {
        class_of[w] = static_cast<ClassId>(best);
        --class_size[from];
        ++class_size[best];
        ++moves;
        if (on_move) on_move({w, from, static_cast<ClassId>(best), best_gain - stay});
      }
    }
    if (moves == 0) break;
  }
  return ClassPartition(std::move(class_of));
}

ClassPartition frequency_bin(const Vocabulary& vocab, int num_classes) {
  const size_t n = vocab.size();
  if (num_classes < 1) throw DataError("number of classes must be positive");
  if (static_cast<size_t>(num_classes) > n)
    throw DataError("requested " + std::to_string(num_classes) + " classes for a vocabulary of " +
                    std::to_string(n) + " words");
  const auto k = static_cast<size_t>(num_classes);

  std::vector<WordId> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](WordId a, WordId b) { return vocab.count(a) > vocab.count(b); });
  const int64_t total = std::accumulate(vocab.counts().begin(), vocab.counts().end(), int64_t{0});

  std::vector<ClassId> class_of(n);
  size_t bin = 0;
  int64_t before = 0;
  for (size_t i = 0; i < n; ++i) {
    if (i > 0) {
      // Bin suggested by the mass preceding this word, advancing one bin at a
      // time so no bin is skipped, and forced forward when only enough words
      // remain to give every later bin one member.
      size_t desired = total > 0 ? static_cast<size_t>((static_cast<__int128>(before) * k) / total) : 0;
      desired = std::min(desired, k - 1);
      if (desired > bin || n - i == k - 1 - bin) ++bin;
    }
    class_of[order[i]] = static_cast<ClassId>(bin);
    before += vocab.count(order[i]);
  }
  return ClassPartition(std::move(class_of));
}

ClassPartition load_partition(std::istream& in, const Vocabulary& vocab) {
  std::vector<int64_t> raw(vocab.size());
  std::vector<bool> seen(vocab.size(), false);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = "partition line " + std::to_string(line_no);
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError(where + ": expected class_id<TAB>word");
    int64_t cls;
    try {
      size_t used = 0;
      cls = std::stoll(line.substr(0, tab), &used);
      if (used != tab) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw DataError(where + ": class id is not an integer");
    }
    const std::string word = line.substr(tab + 1);
    auto id = vocab.find(word);
    if (!id) throw MismatchError(where + ": unknown word '" + word + "'");
    if (seen[*id]) throw DataError(where + ": duplicate word '" + word + "'");
    seen[*id] = true;
    raw[*id] = cls;
  }
  for (size_t w = 0; w < vocab.size(); ++w)
    if (!seen[w])
      throw MismatchError("partition is missing vocabulary word '" + vocab.type(static_cast<WordId>(w)) + "'");

  std::map<int64_t, ClassId> dense;
  for (int64_t c : raw) dense.emplace(c, 0);
  ClassId next = 0;
  for (auto& [c, id] : dense) id = next++;
  std::vector<ClassId> class_of(vocab.size());
  for (size_t w = 0; w < vocab.size(); ++w) class_of[w] = dense[raw[w]];
  return ClassPartition(std::move(class_of));
}

}  // namespace mlbl
