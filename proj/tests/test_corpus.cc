#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "helpers.h"
#include "mlbl/corpus.h"

using namespace mlbl;

TEST_CASE("normalize_token lowercases and maps digits to zero") {
  CHECK(normalize_token("Perfectly") == "perfectly");
  CHECK(normalize_token("1984") == "0000");
  CHECK(normalize_token("a1b2") == "a0b0");
  CHECK(normalize_token("ПРИВЕТ") == "привет");
  CHECK(normalize_token("Größe") == "größe");
  CHECK(normalize_token("<unk>") == "<unk>");
}

TEST_CASE("normalize_token is idempotent") {
  Rng rng(7);
  const std::string alphabet[] = {"a", "Z", "7", "é", "Ж", "ж", "-", "Q", "0"};
  for (int trial = 0; trial < 500; ++trial) {
    std::string token;
    for (size_t i = 0, n = 1 + rng.below(10); i < n; ++i) token += alphabet[rng.below(9)];
    const std::string once = normalize_token(token);
    CHECK(normalize_token(once) == once);
    CHECK(once.find_first_of("123456789") == std::string::npos);
  }
}

TEST_CASE("cyrillic ratio") {
  CHECK(is_mostly_cyrillic("привет"));
  CHECK_FALSE(is_mostly_cyrillic("hello"));
  CHECK(is_mostly_cyrillic("приветa"));        // 6 of 7
  CHECK_FALSE(is_mostly_cyrillic("приве12"));  // 5 of 7
}

TEST_CASE("read_sentences splits lines and normalizes") {
  std::istringstream in("The Cat  sat\n\n  on 2 mats \r\nпривет Hello\n");
  auto s = read_sentences(in);
  REQUIRE(s.size() == 3);
  CHECK(s[0] == Sentence{"the", "cat", "sat"});
  CHECK(s[1] == Sentence{"on", "0", "mats"});

  std::istringstream in2("привет Hello\n");
  auto f = read_sentences(in2, {true});
  CHECK(f[0] == Sentence{"привет", "<unk>"});
}

namespace {

std::vector<Sentence> singleton_corpus() {
  return {{"x", "x", "y", "a"}, {"y", "b", "c"}, {"x", "d"}};
}

}  // namespace

TEST_CASE("build_vocabulary prunes the requested share of singletons") {
  const auto corpus = singleton_corpus();  // singletons a, b, c, d

  auto full = build_vocabulary(corpus, 1.0, 1);
  CHECK(full.size() == 4);
  CHECK(full.count(kUnkId) == 4);
  for (const char* w : {"a", "b", "c", "d"}) CHECK(full.lookup(w) == kUnkId);

  auto none = build_vocabulary(corpus, 0.0, 1);
  CHECK(none.size() == 8);
  CHECK(none.count(kUnkId) == 0);

  auto half = build_vocabulary(corpus, 0.5, 1);
  CHECK(half.size() == 6);
  CHECK(half.count(kUnkId) == 2);
  auto again = build_vocabulary(corpus, 0.5, 1);
  CHECK(again == half);
}

TEST_CASE("vocabulary ids are reserved then ordered by count") {
  auto v = build_vocabulary(singleton_corpus(), 0.0, 1);
  CHECK(v.type(kUnkId) == "<unk>");
  CHECK(v.type(kPadId) == "<s>");
  CHECK(v.type(2) == "x");  // 3 occurrences
  CHECK(v.type(3) == "y");  // 2
  CHECK(v.type(4) == "a");  // singletons, lexicographic
  CHECK(v.type(7) == "d");
  CHECK(v.count(kPadId) == 0);
  CHECK(v.lookup("<s>") == kUnkId);
  CHECK(v.lookup("zzz") == kUnkId);
  CHECK(v.token_count() == 9);
}

TEST_CASE("build_vocabulary rejects empty input") {
  CHECK_THROWS_AS(build_vocabulary({}, 0.05, 1), DataError);
  CHECK_THROWS_AS(build_vocabulary({{}, {}}, 0.05, 1), DataError);
}

TEST_CASE("vocabulary properties on random corpora") {
  for (uint64_t seed = 1; seed <= 40; ++seed) {
    Rng rng(seed);
    std::vector<Sentence> corpus(1 + rng.below(20));
    size_t tokens = 0;
    for (auto& s : corpus) {
      s.resize(rng.below(12));
      for (auto& t : s) t = "t" + std::to_string(rng.below(30));
      tokens += s.size();
    }
    if (tokens == 0) continue;
    const double kappa = rng.uniform();
    const auto v = build_vocabulary(corpus, kappa, seed);

    std::map<std::string, int64_t> counts;
    for (const auto& s : corpus)
      for (const auto& t : s) ++counts[t];
    size_t singletons = 0;
    for (const auto& [t, n] : counts) singletons += n == 1;
    const auto pruned = static_cast<size_t>(std::llround(kappa * static_cast<double>(singletons)));

    // Mass conservation, density and count invariants.
    int64_t mass = 0;
    for (size_t w = 0; w < v.size(); ++w) mass += v.count(static_cast<WordId>(w));
    CHECK(mass == static_cast<int64_t>(tokens));
    CHECK(v.size() == counts.size() - pruned + 2);
    CHECK(v.count(kUnkId) == static_cast<int64_t>(pruned));
    for (size_t w = 2; w < v.size(); ++w) {
      CHECK(v.count(static_cast<WordId>(w)) >= 1);
      CHECK(v.find(v.type(static_cast<WordId>(w))) == static_cast<WordId>(w));
      if (w > 2) CHECK(v.count(static_cast<WordId>(w - 1)) >= v.count(static_cast<WordId>(w)));
    }
    CHECK(build_vocabulary(corpus, kappa, seed) == v);
  }
}

TEST_CASE("vocabulary file round trip") {
  const auto v = build_vocabulary(singleton_corpus(), 0.5, 3);
  std::stringstream ss;
  v.write(ss);
  CHECK(ss.str().substr(0, 12) == "0\t<unk>\t2\n1\t");
  const auto back = Vocabulary::read(ss);
  CHECK(back == v);

  std::istringstream bad("0\t<unk>\t0\n1\t<s>\t0\n3\tx\t2\n");
  CHECK_THROWS_AS(Vocabulary::read(bad), DataError);
  std::istringstream no_reserved("0\tx\t1\n");
  CHECK_THROWS_AS(Vocabulary::read(no_reserved), DataError);
}

TEST_CASE("extract_ngrams pads on the left") {
  {
    const std::vector<WordId> s{5};
    auto set = extract_ngrams(s, 3);
    REQUIRE(set.size() == 1);
    CHECK(std::vector<WordId>(set.context(0).begin(), set.context(0).end()) == std::vector<WordId>{kPadId, kPadId});
    CHECK(set.target(0) == 5);
  }
  {
    const std::vector<WordId> s{5, 7};
    auto set = extract_ngrams(s, 2);
    REQUIRE(set.size() == 2);
    CHECK(set.context(0)[0] == kPadId);
    CHECK(set.target(0) == 5);
    CHECK(set.context(1)[0] == 5);
    CHECK(set.target(1) == 7);
  }
  {
    const std::vector<WordId> s{2, 3, 4};
    auto set = extract_ngrams(s, 3);
    REQUIRE(set.size() == 3);
    CHECK(set.context(2)[0] == 2);
    CHECK(set.context(2)[1] == 3);
    CHECK(set.target(2) == 4);
  }
  CHECK(extract_ngrams(std::vector<WordId>{}, 3).empty());
}

TEST_CASE("extract_ngrams windows match the sentence") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(4));
    std::vector<WordId> s(rng.below(15));
    for (auto& w : s) w = static_cast<WordId>(2 + rng.below(9));
    const auto set = extract_ngrams(s, n);
    REQUIRE(set.size() == s.size());
    for (size_t i = 0; i < s.size(); ++i) {
      CHECK(set.target(i) == s[i]);
      CHECK(set.context(i).size() == static_cast<size_t>(n - 1));
      for (int j = 0; j < n - 1; ++j) {
        const long pos = static_cast<long>(i) - (n - 1) + j;
        CHECK(set.context(i)[j] == (pos < 0 ? kPadId : s[pos]));
      }
    }
  }
}

TEST_CASE("extract_ngrams maps sentences through the vocabulary") {
  const auto v = build_vocabulary(singleton_corpus(), 0.0, 1);
  const auto set = extract_ngrams({{"x", "nope", "<s>"}}, v, 2);
  REQUIRE(set.size() == 3);
  CHECK(set.target(0) == v.lookup("x"));
  CHECK(set.target(1) == kUnkId);
  CHECK(set.target(2) == kUnkId);
}
