#include "mlbl/eval.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace mlbl {

std::vector<Real> score_corpus(const Model& model, const std::vector<Sentence>& test, int threads) {
  const NGramSet data = extract_ngrams(test, model.vocab(), model.config().order);
  return score_instances(model, data, threads);
}

namespace {

void finish(GroupStat& g, size_t total_tokens) {
  g.share = static_cast<Real>(g.tokens) / static_cast<Real>(total_tokens);
  g.ppl = std::exp(g.nll / static_cast<Real>(g.tokens));
}

}  // namespace

EvalReport summarize(std::span<const Real> log_probs) {
  if (log_probs.empty()) throw DataError("cannot compute perplexity of an empty test set");
  long double nll = 0;
  for (Real lp : log_probs) nll -= lp;
  EvalReport report;
  report.token_count = log_probs.size();
  report.total_nll = static_cast<Real>(nll);
  report.total_ppl = static_cast<Real>(std::exp(nll / static_cast<long double>(log_probs.size())));
  return report;
}

EvalReport summarize_groups(std::span<const Real> log_probs, std::span<const std::string> labels,
                            const std::vector<std::string>* order) {
  if (labels.size() != log_probs.size()) throw DataError("one label per scored token is required");
  EvalReport report = summarize(log_probs);
  std::map<std::string, std::pair<size_t, long double>> acc;
  for (size_t i = 0; i < labels.size(); ++i) {
    auto& [n, nll] = acc[labels[i]];
    ++n;
    nll -= log_probs[i];
  }
  auto add = [&](const std::string& label, const std::pair<size_t, long double>& v) {
    GroupStat g;
    g.label = label;
    g.tokens = v.first;
    g.nll = static_cast<Real>(v.second);
    finish(g, report.token_count);
    report.groups.push_back(std::move(g));
  };
  if (order) {
    for (const auto& label : *order)
      if (auto it = acc.find(label); it != acc.end()) add(label, it->second);
  } else {
    for (const auto& [label, v] : acc) add(label, v);
  }
  return report;
}

EvalReport perplexity(const Model& model, const std::vector<Sentence>& test, int threads) {
  return summarize(score_corpus(model, test, threads));
}

Real smoothed_unigram_log_prob(const Vocabulary& vocab, WordId w) {
  if (!Vocabulary::scorable(w)) throw Error("the padding symbol cannot be predicted");
  double tokens = 0;
  for (size_t v = 0; v < vocab.size(); ++v)
    if (Vocabulary::scorable(static_cast<WordId>(v))) tokens += static_cast<double>(vocab.count(static_cast<WordId>(v)));
  return std::log((static_cast<double>(vocab.count(w)) + 1.0) /
                  (tokens + static_cast<double>(vocab.scorable_size())));
}

EvalReport unigram_perplexity(const Vocabulary& vocab, const std::vector<Sentence>& test) {
  std::vector<Real> cache(vocab.size(), 0);
  for (size_t v = 0; v < vocab.size(); ++v)
    if (Vocabulary::scorable(static_cast<WordId>(v))) cache[v] = smoothed_unigram_log_prob(vocab, static_cast<WordId>(v));
  std::vector<Real> scores;
  for (const auto& sentence : test)
    for (WordId w : vocab.map(sentence)) scores.push_back(cache[w]);
  return summarize(scores);
}

TypeCounts count_types(const std::vector<Sentence>& sentences) {
  TypeCounts counts;
  for (const auto& sentence : sentences)
    for (const auto& token : sentence) ++counts[token];
  return counts;
}

std::string frequency_bin_label(int64_t count) {
  if (count <= 0) return "unseen";
  int x = 0;
  for (int64_t bound = 10; count >= bound; ++x) {
    if (bound > INT64_MAX / 10) {
      ++x;
      break;
    }
    bound *= 10;
  }
  return std::to_string(x);
}

EvalReport ppl_by_frequency(const Model& model, const std::vector<Sentence>& test, const TypeCounts& train_counts,
                            int threads) {
  const auto scores = score_corpus(model, test, threads);
  std::vector<std::string> labels;
  labels.reserve(scores.size());
  int max_bin = -1;
  for (const auto& sentence : test)
    for (const auto& token : sentence) {
      auto it = train_counts.find(token);
      const int64_t count = it == train_counts.end() ? 0 : it->second;
      labels.push_back(frequency_bin_label(count));
      if (count > 0) max_bin = std::max(max_bin, std::stoi(labels.back()));
    }
  std::vector<std::string> order{"unseen"};
  for (int x = 0; x <= max_bin; ++x) order.push_back(std::to_string(x));
  return summarize_groups(scores, labels, &order);
}

EvalReport ppl_by_label(const Model& model, const std::vector<Sentence>& test, const std::vector<Sentence>& labels,
                        const std::set<std::string>* keep, int threads) {
  if (labels.size() != test.size())
    throw DataError("label file has " + std::to_string(labels.size()) + " lines but the test set has " +
                    std::to_string(test.size()));
  std::vector<std::string> flat;
  for (size_t i = 0; i < test.size(); ++i) {
    if (labels[i].size() != test[i].size())
      throw DataError("label line " + std::to_string(i + 1) + " has " + std::to_string(labels[i].size()) +
                      " labels for " + std::to_string(test[i].size()) + " tokens");
    for (const auto& label : labels[i])
      flat.push_back(label == "_" || (keep && !keep->count(label)) ? std::string(kRestLabel) : label);
  }
  const auto scores = score_corpus(model, test, threads);
  std::set<std::string> seen(flat.begin(), flat.end());
  std::vector<std::string> order;
  for (const auto& label : seen)
    if (label != kRestLabel) order.push_back(label);
  order.emplace_back(kRestLabel);
  return summarize_groups(scores, flat, &order);
}

void write_report_table(std::ostream& out, const EvalReport& report, const std::string& group_title) {
  char line[160];
  if (!report.groups.empty()) {
    std::snprintf(line, sizeof line, "%-12s %10s %8s %12s\n", group_title.c_str(), "tokens", "share", "ppl");
    out << line;
    for (const auto& g : report.groups) {
      std::snprintf(line, sizeof line, "%-12s %10zu %7.2f%% %12.4f\n", g.label.c_str(), g.tokens, 100.0 * g.share,
                    g.ppl);
      out << line;
    }
  }
  std::snprintf(line, sizeof line, "%-12s %10zu %7.2f%% %12.4f\n", "total", report.token_count, 100.0,
                report.total_ppl);
  out << line;
}

void write_report_jsonl(std::ostream& out, const EvalReport& report) {
  nlohmann::json total = {{"total", true},
                          {"tokens", report.token_count},
                          {"nll", report.total_nll},
                          {"ppl", report.total_ppl}};
  out << total.dump() << '\n';
  for (const auto& g : report.groups) {
    nlohmann::json line = {
        {"group", g.label}, {"tokens", g.tokens}, {"share", g.share}, {"nll", g.nll}, {"ppl", g.ppl}};
    out << line.dump() << '\n';
  }
}

std::vector<SimilarityPair> read_similarity_dataset(std::istream& in) {
  std::vector<SimilarityPair> pairs;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::istringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    const std::string where = "similarity line " + std::to_string(line_no);
    if (fields.size() != 3) throw DataError(where + ": expected word1<TAB>word2<TAB>rating");
    double rating;
    try {
      size_t used = 0;
      rating = std::stod(fields[2], &used);
      if (used != fields[2].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw DataError(where + ": bad rating '" + fields[2] + "'");
    }
    if (!std::isfinite(rating)) throw DataError(where + ": rating is not finite");
    pairs.push_back({normalize_token(fields[0]), normalize_token(fields[1]), rating});
  }
  if (pairs.empty()) throw DataError("similarity dataset is empty");
  return pairs;
}

Vector word_representation(const Model& model, std::string_view word, const PostHocMap* map, OovMode mode,
                           bool* is_oov) {
  const Table& q = model.context_table();
  const Table& r = model.target_table();
  const auto d = q.cols();
  Vector u(2 * d);
  auto id = model.vocab().find(word);
  const bool oov = !id || *id == kPadId;
  if (is_oov) *is_oov = oov;
  if (!oov) {
    u << q.row(*id).transpose(), r.row(*id).transpose();
    return u;
  }
  std::span<const FactorId> known;
  if (mode == OovMode::compose && map) known = map->known_factors(word);
  const auto& params = model.params();
  if (!known.empty() && model.config().context_additive)
    u.head(d) = compose_vector(params.context_factors, known);
  else
    u.head(d) = q.row(kUnkId).transpose();
  if (!known.empty() && model.config().output_additive)
    u.tail(d) = compose_vector(params.target_factors, known);
  else
    u.tail(d) = r.row(kUnkId).transpose();
  return u;
}

Cosine cosine(const Vector& a, const Vector& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0 || nb == 0) return {0.0, true};
  return {a.dot(b) / (na * nb), false};
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (size_t i = 0; i < idx.size();) {
    size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[idx[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

std::optional<double> spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("spearman: lists differ in length");
  if (a.size() < 2) throw Error("spearman: at least two items are required");
  const auto ra = average_ranks(a), rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double mean = (n + 1.0) / 2.0;
  double sab = 0, saa = 0, sbb = 0;
  for (size_t i = 0; i < ra.size(); ++i) {
    const double x = ra[i] - mean, y = rb[i] - mean;
    sab += x * y;
    saa += x * x;
    sbb += y * y;
  }
  if (saa == 0 || sbb == 0) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

SimilarityResult evaluate_similarity(const Model& model, const std::vector<SimilarityPair>& dataset,
                                     const PostHocMap* map, OovMode mode) {
  SimilarityResult result;
  std::set<std::string> oov_words;
  for (const auto& pair : dataset) {
    bool oov1 = false, oov2 = false;
    const Vector u1 = word_representation(model, pair.first, map, mode, &oov1);
    const Vector u2 = word_representation(model, pair.second, map, mode, &oov2);
    if (oov1) oov_words.insert(pair.first);
    if (oov2) oov_words.insert(pair.second);
    const Cosine c = cosine(u1, u2);
    if (c.degenerate) ++result.degenerate_pairs;
    result.model_scores.push_back(c.value);
    result.human_scores.push_back(pair.rating);
  }
  result.oov_count = oov_words.size();
  if (result.model_scores.size() >= 2) result.rho = spearman(result.model_scores, result.human_scores);
  return result;
}

Table concatenated_table(const Model& model) {
  const Table& q = model.context_table();
  const Table& r = model.target_table();
  Table out(q.rows(), q.cols() + r.cols());
  out << q, r;
  return out;
}

std::vector<Neighbor> nearest_neighbors(const Table& table, const Vector& query, size_t k,
                                        std::optional<WordId> exclude) {
  if (k < 1) throw Error("nearest_neighbors: k must be at least 1");
  if (query.size() != table.cols()) throw MismatchError("query dimension does not match the table");
  std::vector<Neighbor> all;
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    if (exclude && *exclude == i) continue;
    all.push_back({static_cast<WordId>(i), cosine(table.row(i).transpose(), query).value});
  }
  const size_t n = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(),
                    [](const Neighbor& a, const Neighbor& b) {
                      return a.similarity != b.similarity ? a.similarity > b.similarity : a.word < b.word;
                    });
  all.resize(n);
  return all;
}

}  // namespace mlbl
