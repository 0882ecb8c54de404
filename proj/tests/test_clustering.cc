#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "helpers.h"
#include "mlbl/clustering.h"

using namespace mlbl;

namespace {

// AMI computed from scratch: class bigram counts over (previous, current)
// pairs with PAD before each sentence.
double oracle_ami(const std::vector<std::vector<WordId>>& sentences, const std::vector<ClassId>& class_of) {
  std::map<std::pair<ClassId, ClassId>, double> joint;
  std::map<ClassId, double> left, right;
  double n = 0;
  for (const auto& s : sentences) {
    WordId prev = kPadId;
    for (WordId w : s) {
      const ClassId a = class_of[prev], b = class_of[w];
      joint[{a, b}] += 1;
      left[a] += 1;
      right[b] += 1;
      n += 1;
      prev = w;
    }
  }
  double ami = 0;
  for (const auto& [ab, c] : joint) ami += c / n * std::log(c * n / (left[ab.first] * right[ab.second]));
  return ami;
}

std::vector<std::vector<WordId>> map_all(const std::vector<Sentence>& text, const Vocabulary& v) {
  std::vector<std::vector<WordId>> out;
  for (const auto& s : text) out.push_back(v.map(s));
  return out;
}

void check_partition(const ClassPartition& p, size_t words) {
  CHECK(p.num_words() == words);
  std::vector<int> seen(words, 0);
  for (ClassId c = 0; c < static_cast<ClassId>(p.num_classes()); ++c) {
    CHECK(!p.members(c).empty());
    for (size_t i = 0; i < p.members(c).size(); ++i) {
      const WordId w = p.members(c)[i];
      ++seen[w];
      CHECK(p.class_of(w) == c);
      if (i) CHECK(p.members(c)[i - 1] < w);
    }
  }
  for (int s : seen) CHECK(s == 1);
}

}  // namespace

TEST_CASE("default_num_classes") {
  CHECK(default_num_classes(10000) == 100);
  CHECK(default_num_classes(1) == 1);
  CHECK(default_num_classes(206000) == 454);
  CHECK(default_num_classes(2) == 1);
}

TEST_CASE("ClassPartition validation") {
  CHECK_THROWS(ClassPartition({0, 2}));
  CHECK_THROWS(ClassPartition({0, -1}));
  const ClassPartition p({1, 0, 1});
  CHECK(p.num_classes() == 2);
  CHECK(p.members(1).size() == 2);
  check_partition(ClassPartition::single(5), 5);
}

TEST_CASE("AMI matches a from-scratch computation") {
  testing::SyntheticLanguage lang;
  const auto text = lang.generate(2000, 3);
  const auto v = build_vocabulary(text, 0.0, 1);
  const auto ids = map_all(text, v);
  const auto counts = BigramCounts::from_sentences(ids, v.size());
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const auto p = testing::random_partition(v.size(), 2 + rng.below(10), rng);
    CHECK(average_mutual_information(counts, p) == doctest::Approx(oracle_ami(ids, p.assignment())).epsilon(1e-10));
  }
}

TEST_CASE("brown clustering on an alternating corpus finds the best split") {
  Sentence s;
  for (int i = 0; i < 6; ++i) s.push_back(i % 2 ? "b" : "a");
  const auto v = build_vocabulary({s}, 0.0, 1);
  const auto ids = map_all({s}, v);
  const auto counts = BigramCounts::from_sentences(ids, v.size());
  const auto p = brown_cluster(counts, 2, 20);
  check_partition(p, v.size());
  const WordId a = *v.find("a"), b = *v.find("b");
  CHECK(p.class_of(a) != p.class_of(b));
  CHECK(p.class_of(kPadId) == p.class_of(b));
}

TEST_CASE("brown clustering degenerate class counts") {
  testing::SyntheticLanguage lang;
  const auto text = lang.generate(1000, 8);
  const auto v = build_vocabulary(text, 0.0, 1);
  const auto counts = BigramCounts::from_sentences(map_all(text, v), v.size());

  const auto one = brown_cluster(counts, 1, 5);
  CHECK(one.num_classes() == 1);

  size_t active = 0;
  for (auto n : counts.unigram) active += n > 0;
  size_t moves = 0;
  const auto full = brown_cluster(counts, static_cast<int>(active), 5, [&](const ExchangeMove&) { ++moves; });
  check_partition(full, v.size());
  CHECK(moves == 0);

  CHECK_THROWS_AS(brown_cluster(counts, static_cast<int>(active) + 1, 5), DataError);
}

TEST_CASE("brown clustering ascends monotonically and is deterministic") {
  testing::SyntheticLanguage lang;
  for (uint64_t seed = 1; seed <= 3; ++seed) {
    const auto text = lang.generate(5000, seed);
    const auto v = build_vocabulary(text, 0.0, 1);
    const auto ids = map_all(text, v);
    const auto counts = BigramCounts::from_sentences(ids, v.size());
    const int k = 8;

    std::vector<ClassId> state = brown_cluster(counts, k, 0).assignment();
    double ami = oracle_ami(ids, state);
    size_t moves = 0;
    bool monotone = true;
    const auto p = brown_cluster(counts, k, 10, [&](const ExchangeMove& m) {
      CHECK(state[m.word] == m.from);
      state[m.word] = m.to;
      const double next = oracle_ami(ids, state);
      if (next < ami - 1e-12) monotone = false;
      ami = next;
      ++moves;
    });
    CHECK(monotone);
    CHECK(moves > 0);
    CHECK(state == p.assignment());
    check_partition(p, v.size());
    CHECK(brown_cluster(counts, k, 10) == p);
  }
}

TEST_CASE("frequency binning") {
  auto vocab_with = [](std::vector<int64_t> counts) {
    std::vector<std::pair<std::string, int64_t>> entries;
    for (size_t i = 1; i < counts.size(); ++i) entries.emplace_back("w" + std::to_string(i), counts[i]);
    return Vocabulary::from_counts(std::move(entries), counts[0]);
  };
  {
    // Four scorable words of equal mass (UNK among them) split two and two.
    const auto v = vocab_with({5, 5, 5, 5});
    const auto p = frequency_bin(v, 2);
    check_partition(p, v.size());
    size_t first = 0;
    for (WordId w : {0, 2, 3, 4}) first += p.class_of(w) == 0;
    CHECK(first == 2);
  }
  {
    // Counts [8,1,...,1] over scorable words: the top word alone, then the rest.
    const auto v = vocab_with({8, 1, 1, 1, 1, 1, 1, 1, 1});
    const auto p = frequency_bin(v, 2);
    check_partition(p, v.size());
    CHECK(p.members(p.class_of(kUnkId)).size() == 1);
    for (WordId w = 2; w < static_cast<WordId>(v.size()); ++w) CHECK(p.class_of(w) != p.class_of(kUnkId));
  }
  {
    const auto v = vocab_with({0, 4, 3, 2, 1});
    CHECK(frequency_bin(v, 1).num_classes() == 1);
  }
}

TEST_CASE("frequency bins are contiguous and mass balanced on random vocabularies") {
  for (uint64_t seed = 1; seed <= 30; ++seed) {
    Rng rng(seed);
    const auto v = testing::toy_vocabulary(5 + rng.below(60), rng);
    const int k = 1 + static_cast<int>(rng.below(std::min<uint64_t>(v.size(), 8)));
    const auto p = frequency_bin(v, k);
    check_partition(p, v.size());
    CHECK(p.num_classes() == static_cast<size_t>(k));
  }
}

TEST_CASE("load_partition") {
  std::vector<std::pair<std::string, int64_t>> entries{{"a", 2}, {"b", 1}};
  const auto v = Vocabulary::from_counts(entries, 0);
  {
    std::istringstream in("7\t<unk>\n7\t<s>\n3\ta\n9\tb\n");
    const auto p = load_partition(in, v);
    CHECK(p.num_classes() == 3);
    CHECK(p.class_of(*v.find("a")) == 0);
    CHECK(p.class_of(kUnkId) == 1);
    CHECK(p.class_of(*v.find("b")) == 2);
  }
  {
    std::istringstream in("0\t<unk>\n0\t<s>\n1\ta\n");
    try {
      load_partition(in, v);
      FAIL("expected an error");
    } catch (const MismatchError& e) {
      CHECK(std::string(e.what()).find("'b'") != std::string::npos);
    }
  }
  {
    std::istringstream in("0\t<unk>\n0\t<s>\n1\ta\n1\ta\n2\tb\n");
    CHECK_THROWS_AS(load_partition(in, v), DataError);
  }
  {
    std::istringstream in("0\t<unk>\n0\t<s>\n1\ta\n1\tb\n1\tzzz\n");
    CHECK_THROWS_AS(load_partition(in, v), MismatchError);
  }
}

TEST_CASE("partition file round trip") {
  Rng rng(5);
  const auto v = testing::toy_vocabulary(30, rng);
  const auto p = testing::random_partition(v.size(), 6, rng);
  std::stringstream ss;
  p.write(ss, v);
  const auto back = load_partition(ss, v);
  for (WordId a = 0; a < 30; ++a)
    for (WordId b = 0; b < 30; ++b) CHECK((p.class_of(a) == p.class_of(b)) == (back.class_of(a) == back.class_of(b)));
}
