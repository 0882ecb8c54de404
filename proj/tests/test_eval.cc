#include <cmath>
#include <sstream>

#include "doctest.h"
#include "helpers.h"
#include "json.hpp"
#include "mlbl/eval.h"

using namespace mlbl;
using testing::ToySpec;

namespace {

// Classic rank-difference formula; only valid without ties.
double untied_spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const size_t n = a.size();
  auto ranks = [n](const std::vector<double>& x) {
    std::vector<double> r(n);
    for (size_t i = 0; i < n; ++i) {
      r[i] = 1;
      for (size_t j = 0; j < n; ++j) r[i] += x[j] < x[i];
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  double d2 = 0;
  for (size_t i = 0; i < n; ++i) d2 += (ra[i] - rb[i]) * (ra[i] - rb[i]);
  const double nn = static_cast<double>(n);
  return 1 - 6 * d2 / (nn * (nn * nn - 1));
}

}  // namespace

TEST_CASE("perplexity examples") {
  const std::vector<Real> lp{std::log(0.5), std::log(0.5), std::log(0.5)};
  CHECK(summarize(lp).total_ppl == doctest::Approx(2.0));
  const std::vector<Real> mixed{std::log(0.25), std::log(1.0)};
  CHECK(summarize(mixed).total_ppl == doctest::Approx(2.0));
  CHECK_THROWS_AS(summarize(std::vector<Real>{}), DataError);

  // Overall PPL is the token-weighted geometric mean of the group PPLs.
  Rng rng(4);
  std::vector<Real> probs;
  std::vector<std::string> labels;
  for (int i = 0; i < 200; ++i) {
    probs.push_back(std::log(rng.uniform() * 0.9 + 0.05));
    labels.push_back("g" + std::to_string(rng.below(5)));
  }
  const auto report = summarize_groups(probs, labels);
  double log_mean = 0, share = 0;
  size_t tokens = 0;
  for (const auto& g : report.groups) {
    log_mean += g.share * std::log(g.ppl);
    share += g.share;
    tokens += g.tokens;
  }
  CHECK(share == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(tokens == 200);
  CHECK(std::exp(log_mean) == doctest::Approx(report.total_ppl).epsilon(1e-10));
}

TEST_CASE("unigram-bias model perplexity matches the unigram oracle") {
  const auto vocab = Vocabulary::from_counts({{"a", 6}, {"b", 3}, {"c", 1}}, 2);
  Model m(ModelConfig{3, 4, false, false, true}, vocab, build_factorization(vocab, nullptr),
          ClassPartition::single(vocab.size()));
  init_params(m, 1, 0.01);
  for (auto& c : m.params().context_transforms) c.setZero();
  m.compile();
  const std::vector<Sentence> test{{"a", "b", "zzz"}, {"c", "a"}};
  const auto report = perplexity(m, test);
  double nll = 0;
  for (const auto& s : test)
    for (const auto& t : s) nll -= smoothed_unigram_log_prob(vocab, vocab.lookup(t));
  CHECK(report.token_count == 5);
  CHECK(report.total_ppl == doctest::Approx(std::exp(nll / 5)).epsilon(1e-12));
  CHECK(unigram_perplexity(vocab, test).total_ppl == doctest::Approx(report.total_ppl).epsilon(1e-12));
}

TEST_CASE("frequency bins") {
  CHECK(frequency_bin_label(0) == "unseen");
  CHECK(frequency_bin_label(1) == "0");
  CHECK(frequency_bin_label(9) == "0");
  CHECK(frequency_bin_label(10) == "1");
  CHECK(frequency_bin_label(500) == "2");
  CHECK(frequency_bin_label(1000) == "3");

  ToySpec spec;
  spec.words = 8;
  spec.classes = 2;
  const Model m = testing::make_toy_model(spec);
  const std::vector<Sentence> train{{"w2", "w2", "w3"}};
  TypeCounts counts = count_types(train);
  CHECK(counts["w2"] == 2);
  const std::vector<Sentence> test{{"w2", "w3", "new"}, {"w4"}};
  const auto report = ppl_by_frequency(m, test, counts);
  REQUIRE(report.groups.size() == 2);
  CHECK(report.groups[0].label == "unseen");
  CHECK(report.groups[0].tokens == 2);
  CHECK(report.groups[1].label == "0");
  CHECK(report.groups[1].tokens == 2);
  CHECK(report.groups[0].share + report.groups[1].share == doctest::Approx(1.0));
}

TEST_CASE("label grouping") {
  ToySpec spec;
  spec.words = 8;
  spec.classes = 2;
  const Model m = testing::make_toy_model(spec);
  const std::vector<Sentence> test{{"w2", "w3", "w4"}, {"w5"}};
  const std::vector<Sentence> labels{{"N", "_", "V"}, {"N"}};
  const auto all = ppl_by_label(m, test, labels);
  REQUIRE(all.groups.size() == 3);
  CHECK(all.groups[0].label == "N");
  CHECK(all.groups[0].tokens == 2);
  CHECK(all.groups[1].label == "V");
  CHECK(all.groups[2].label == "Rest");
  const std::set<std::string> keep{"V"};
  const auto kept = ppl_by_label(m, test, labels, &keep);
  REQUIRE(kept.groups.size() == 2);
  CHECK(kept.groups[1].label == "Rest");
  CHECK(kept.groups[1].tokens == 3);
  CHECK(kept.total_ppl == doctest::Approx(all.total_ppl).epsilon(1e-12));

  const std::vector<Sentence> short_labels{{"N", "_"}, {"N"}};
  CHECK_THROWS_AS(ppl_by_label(m, test, short_labels), DataError);
  const std::vector<Sentence> one_line{{"N", "_", "V"}};
  CHECK_THROWS_AS(ppl_by_label(m, test, one_line), DataError);
}

TEST_CASE("jsonl report") {
  const std::vector<Real> lp{std::log(0.5), std::log(0.25)};
  const std::vector<std::string> labels{"a", "b"};
  std::stringstream out;
  write_report_jsonl(out, summarize_groups(lp, labels));
  std::string line;
  std::getline(out, line);
  const auto total = nlohmann::json::parse(line);
  CHECK(total["total"] == true);
  CHECK(total["tokens"] == 2);
  CHECK(total["ppl"].get<double>() == doctest::Approx(std::sqrt(8.0)));
  std::getline(out, line);
  const auto first = nlohmann::json::parse(line);
  CHECK(first["group"] == "a");
  CHECK(first["ppl"].get<double>() == doctest::Approx(2.0));
  std::getline(out, line);
  CHECK(nlohmann::json::parse(line)["group"] == "b");
}

TEST_CASE("cosine") {
  Vector a(2), b(2), z = Vector::Zero(2);
  a << 1, 0;
  b << 1, 1;
  CHECK(cosine(a, b).value == doctest::Approx(1 / std::sqrt(2.0)));
  CHECK(cosine(a, a).value == doctest::Approx(1.0));
  CHECK(cosine(a, -a).value == doctest::Approx(-1.0));
  const Cosine zc = cosine(a, z);
  CHECK(zc.degenerate);
  CHECK(zc.value == 0);

  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    Vector x(6), y(6);
    for (int i = 0; i < 6; ++i) {
      x[i] = rng.gaussian(1);
      y[i] = rng.gaussian(1);
    }
    const double c = cosine(x, y).value;
    CHECK(c >= -1 - 1e-12);
    CHECK(c <= 1 + 1e-12);
    CHECK(c == doctest::Approx(cosine(y, x).value).epsilon(1e-14));
    CHECK(c == doctest::Approx(cosine(3.5 * x, y).value).epsilon(1e-12));
  }
}

TEST_CASE("spearman") {
  const std::vector<double> a{1, 2, 3, 4}, b{1, 3, 2, 4};
  CHECK(*spearman(a, b) == doctest::Approx(0.8).epsilon(1e-15));
  const std::vector<double> rev{4, 3, 2, 1};
  CHECK(*spearman(a, rev) == doctest::Approx(-1.0));
  const std::vector<double> flat{2, 2, 2, 2};
  CHECK_FALSE(spearman(a, flat).has_value());

  Rng rng(7);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> x(12), y(12);
    for (size_t i = 0; i < 12; ++i) {
      x[i] = rng.gaussian(1);
      y[i] = rng.gaussian(1);
    }
    const double rho = *spearman(x, y);
    CHECK(rho == doctest::Approx(untied_spearman(x, y)).epsilon(1e-12));
    // Strictly increasing transforms do not change it.
    std::vector<double> ex(12);
    for (size_t i = 0; i < 12; ++i) ex[i] = std::exp(x[i]) + 7;
    CHECK(*spearman(ex, y) == doctest::Approx(rho).epsilon(1e-12));
    CHECK(*spearman(y, x) == doctest::Approx(rho).epsilon(1e-12));
  }
}

TEST_CASE("similarity dataset reading") {
  std::istringstream in("# header\nCat\tdog\t7.5\nhouse\tcar\t1\n");
  const auto pairs = read_similarity_dataset(in);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].first == "cat");
  CHECK(pairs[0].rating == 7.5);
  std::istringstream bad("a\tb\n");
  CHECK_THROWS_AS(read_similarity_dataset(bad), DataError);
  std::istringstream nan_rating("a\tb\tx\n");
  CHECK_THROWS_AS(read_similarity_dataset(nan_rating), DataError);
  std::istringstream empty("# nothing\n");
  CHECK_THROWS_AS(read_similarity_dataset(empty), DataError);
}

namespace {

// A small additive model over real factor strings.
Model morph_model(bool additive) {
  const auto vocab = Vocabulary::from_counts({{"walk", 5}, {"walked", 3}, {"talk", 2}, {"run", 4}}, 1);
  std::istringstream seg_in(
      "walk\twalk|stem\nwalked\twalk|stem ed|suf\ntalk\ttalk|stem\ntalked\ttalk|stem ed|suf\n"
      "walks\twalk|stem s|suf\n");
  const auto segs = parse_segmentations(seg_in);
  Model m(ModelConfig{3, 4, additive, additive, false}, vocab, build_factorization(vocab, additive ? &segs : nullptr),
          std::nullopt);
  Rng rng(5);
  testing::randomize(m.params(), rng, 0.5);
  m.compile();
  return m;
}

}  // namespace

TEST_CASE("word representations and OOV composition") {
  const Model m = morph_model(true);
  std::istringstream seg_in("talked\ttalk|stem ed|suf\nwalks\twalk|stem s|suf\n");
  const auto segs = parse_segmentations(seg_in);
  const auto map = build_post_hoc_map(segs, m.factorization().factors);

  bool oov = false;
  const Vector walk = word_representation(m, "walk", &map, OovMode::compose, &oov);
  CHECK_FALSE(oov);
  const WordId w = *m.vocab().find("walk");
  CHECK(walk.head(4) == m.context_table().row(w).transpose());
  CHECK(walk.tail(4) == m.target_table().row(w).transpose());
  CHECK(word_representation(m, "walk", &map, OovMode::no_compose) == walk);

  // "talked" is OOV; both its factors are known.
  const Vector talked = word_representation(m, "talked", &map, OovMode::compose, &oov);
  CHECK(oov);
  const auto& fv = m.factorization().factors;
  const FactorId stem = *fv.find("talk|stem"), suf = *fv.find("ed|suf");
  const Vector q = m.params().context_factors.row(stem) + m.params().context_factors.row(suf);
  CHECK((talked.head(4) - q.transpose().transpose()).cwiseAbs().maxCoeff() < 1e-15);

  // Without composition an OOV word is UNK.
  const Vector unk = word_representation(m, "talked", &map, OovMode::no_compose);
  CHECK(unk.head(4) == m.context_table().row(kUnkId).transpose());

  // Two OOV words with the same known factors have identical vectors.
  std::istringstream two("zzz\ttalk|stem ed|suf\nyyy\ted|suf talk|stem\n");
  const auto segs2 = parse_segmentations(two);
  const auto map2 = build_post_hoc_map(segs2, fv);
  const Vector a = word_representation(m, "zzz", &map2, OovMode::compose);
  const Vector b = word_representation(m, "yyy", &map2, OovMode::compose);
  CHECK(cosine(a, b).value == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("similarity evaluation") {
  const Model m = morph_model(true);
  const std::vector<SimilarityPair> data{
      {"walk", "walked", 8}, {"walk", "run", 5}, {"talk", "run", 3}, {"walk", "talk", 6}};
  const auto compose = evaluate_similarity(m, data, nullptr, OovMode::compose);
  const auto plain = evaluate_similarity(m, data, nullptr, OovMode::no_compose);
  CHECK(compose.oov_count == 0);
  CHECK(compose.model_scores == plain.model_scores);
  REQUIRE(compose.rho.has_value());
  CHECK(*compose.rho == *plain.rho);
  const Table t = concatenated_table(m);
  const WordId w1 = *m.vocab().find("walk"), w2 = *m.vocab().find("walked");
  CHECK(compose.model_scores[0] ==
        doctest::Approx(cosine(t.row(w1).transpose(), t.row(w2).transpose()).value).epsilon(1e-15));

  const std::vector<SimilarityPair> with_oov{{"walk", "qqq", 2}, {"qqq", "run", 3}, {"walk", "run", 1}};
  CHECK(evaluate_similarity(m, with_oov, nullptr, OovMode::compose).oov_count == 1);
}

TEST_CASE("nearest neighbors") {
  Table t(4, 2);
  t << 1, 0,
       0, 1,
       2, 0,
       1, 1;
  Vector q(2);
  q << 1, 0;
  auto nn = nearest_neighbors(t, q, 3);
  REQUIRE(nn.size() == 3);
  CHECK(nn[0].word == 0);  // tie with row 2, lower id first
  CHECK(nn[1].word == 2);
  CHECK(nn[2].word == 3);
  nn = nearest_neighbors(t, q, 10, WordId{0});
  CHECK(nn.size() == 3);
  CHECK(nn[0].word == 2);
  CHECK_THROWS(nearest_neighbors(t, q, 0));
  Vector wrong(3);
  CHECK_THROWS_AS(nearest_neighbors(t, wrong, 2), MismatchError);
}
