#ifndef MLBL_TESTS_HELPERS_H
#define MLBL_TESTS_HELPERS_H

// Shared test fixtures: random toy models, random n-gram data and a seeded
// synthetic "morphological" language.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mlbl/clustering.h"
#include "mlbl/corpus.h"
#include "mlbl/model.h"
#include "mlbl/morphology.h"
#include "mlbl/training.h"

namespace mlbl::testing {

struct ToySpec {
  size_t words = 10;    // including UNK and PAD
  size_t factors = 0;   // 0: identity factorization
  size_t classes = 0;   // 0: classless
  int dim = 3;
  int order = 3;
  bool context_additive = false;
  bool output_additive = false;
  uint64_t seed = 1;
  double sigma = 0.5;   // spread of random parameters
};

inline Vocabulary toy_vocabulary(size_t words, Rng& rng) {
  std::vector<std::pair<std::string, int64_t>> entries;
  for (size_t i = 2; i < words; ++i)
    entries.emplace_back("w" + std::to_string(i), static_cast<int64_t>(1 + rng.below(50)));
  return Vocabulary::from_counts(std::move(entries), static_cast<int64_t>(rng.below(20)));
}

// Every class gets at least one word; the rest are assigned at random.
inline ClassPartition random_partition(size_t words, size_t classes, Rng& rng) {
  std::vector<ClassId> class_of(words);
  std::vector<size_t> order(words);
  for (size_t i = 0; i < words; ++i) order[i] = i;
  rng.shuffle(std::span<size_t>(order));
  for (size_t i = 0; i < words; ++i)
    class_of[order[i]] = static_cast<ClassId>(i < classes ? i : rng.below(classes));
  return ClassPartition(std::move(class_of));
}

// Between one and three factor draws per word, repeats allowed.
inline Factorization random_factorization(size_t words, size_t factors, Rng& rng) {
  Factorization fz;
  for (size_t f = 0; f < factors; ++f) fz.factors.add("f" + std::to_string(f) + "|x");
  std::vector<std::vector<FactorId>> mu(words);
  for (auto& row : mu) {
    const size_t n = 1 + rng.below(3);
    for (size_t i = 0; i < n; ++i) row.push_back(static_cast<FactorId>(rng.below(factors)));
  }
  fz.words = WordFactorization(std::move(mu), factors);
  return fz;
}

inline void randomize(ParameterBlocks& params, Rng& rng, double sigma) {
  for (auto& block : params.blocks())
    for (size_t i = 0; i < block.size; ++i) block.data[i] = rng.gaussian(sigma);
}

inline Model make_toy_model(const ToySpec& spec) {
  Rng rng(spec.seed);
  Vocabulary vocab = toy_vocabulary(spec.words, rng);
  Factorization fz = spec.factors ? random_factorization(spec.words, spec.factors, rng)
                                  : build_factorization(vocab, nullptr);
  std::optional<ClassPartition> partition;
  if (spec.classes) partition = random_partition(spec.words, spec.classes, rng);
  ModelConfig config{spec.order, spec.dim, spec.context_additive, spec.output_additive, spec.classes > 0};
  Model model(config, std::move(vocab), std::move(fz), std::move(partition));
  randomize(model.params(), rng, spec.sigma);
  model.compile();
  return model;
}

inline WordId random_target(size_t words, Rng& rng) {
  WordId w;
  do {
    w = static_cast<WordId>(rng.below(words));
  } while (w == kPadId);
  return w;
}

inline std::vector<WordId> random_context(size_t words, int order, Rng& rng) {
  std::vector<WordId> ctx(static_cast<size_t>(order - 1));
  for (auto& w : ctx) w = static_cast<WordId>(rng.below(words));
  return ctx;
}

inline NGramSet random_ngrams(size_t words, int order, size_t sentences, Rng& rng) {
  NGramSet set(order);
  for (size_t s = 0; s < sentences; ++s) {
    std::vector<WordId> sentence(1 + rng.below(8));
    for (auto& w : sentence) w = random_target(words, rng);
    set.add_sentence(sentence);
  }
  return set;
}

/// A toy inflecting language: words are stem + suffix. Stems have Zipfian
/// frequencies and fall into groups; a word's stem tends to come from the
/// group after the previous word's, and its suffix tends to repeat the
/// previous suffix (agreement).
struct SyntheticLanguage {
  int num_stems = 60;
  int num_suffixes = 8;
  int num_groups = 6;
  double zipf = 1.5;
  double group_follow = 0.8;
  double suffix_agree = 0.7;

  std::string stem(int s) const {
    static const std::string consonants = "bdfgklmnprstvz";
    static const std::string vowels = "aeiou";
    const int syllables = static_cast<int>(consonants.size() * vowels.size());
    std::string out;
    for (int v : {s / syllables, s % syllables}) {
      out += consonants[static_cast<size_t>(v) / vowels.size()];
      out += vowels[static_cast<size_t>(v) % vowels.size()];
    }
    return out;
  }

  std::string suffix(int x) const {
    static const char* list[] = {"", "s", "ed", "ing", "er", "est", "ly", "ness", "ism", "ful", "ous", "ize"};
    return list[x];
  }

  std::string word(int s, int x) const { return stem(s) + suffix(x); }

  std::vector<Sentence> generate(size_t tokens, uint64_t seed) const {
    Rng rng(seed);
    std::vector<double> weight(static_cast<size_t>(num_stems));
    for (int s = 0; s < num_stems; ++s) weight[s] = std::pow(s + 1.0, -zipf);
    // Cumulative Zipf mass overall and within each group.
    auto cumulative = [&](int group) {
      std::vector<double> c(static_cast<size_t>(num_stems));
      double total = 0;
      for (int s = 0; s < num_stems; ++s) {
        if (group < 0 || s % num_groups == group) total += weight[s];
        c[s] = total;
      }
      return c;
    };
    std::vector<std::vector<double>> by_group;
    for (int g = 0; g < num_groups; ++g) by_group.push_back(cumulative(g));
    const auto all = cumulative(-1);
    auto draw = [&](const std::vector<double>& c) {
      const double u = rng.uniform() * c.back();
      return static_cast<int>(std::upper_bound(c.begin(), c.end(), u) - c.begin());
    };

    std::vector<Sentence> out;
    size_t produced = 0;
    while (produced < tokens) {
      const size_t len = std::min<size_t>(5 + rng.below(11), tokens - produced);
      Sentence sentence;
      int prev_stem = -1, prev_suffix = -1;
      for (size_t i = 0; i < len; ++i) {
        int s = (prev_stem >= 0 && rng.uniform() < group_follow) ? draw(by_group[(prev_stem + 1) % num_groups])
                                                                 : draw(all);
        s = std::min(s, num_stems - 1);
        const int x = (prev_suffix >= 0 && rng.uniform() < suffix_agree)
                          ? prev_suffix
                          : static_cast<int>(rng.below(static_cast<uint64_t>(num_suffixes)));
        sentence.push_back(word(s, x));
        prev_stem = s;
        prev_suffix = x;
      }
      produced += len;
      out.push_back(std::move(sentence));
    }
    return out;
  }

  // Segmentations of every possible word.
  Segmentations segmentations() const {
    Segmentations segs;
    for (int s = 0; s < num_stems; ++s)
      for (int x = 0; x < num_suffixes; ++x) {
        std::vector<Morpheme> m{{stem(s), "stem"}};
        if (!suffix(x).empty()) m.push_back({suffix(x), "suffix"});
        segs[word(s, x)] = std::move(m);
      }
    return segs;
  }
};

}  // namespace mlbl::testing

#endif
