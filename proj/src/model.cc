#include "mlbl/model.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

namespace mlbl {

void ModelConfig::validate() const {
  if (order < 2) throw ConfigError("model order must be at least 2");
  if (dim < 1) throw ConfigError("embedding dimension 'dim' must be set to a positive value");
}

std::string ModelConfig::variant() const {
  std::string name = class_based ? "CLBL" : "LBL";
  if (context_additive && output_additive)
    name += "++";
  else if (context_additive)
    name += "+c";
  else if (output_additive)
    name += "+o";
  return name;
}

void ParameterBlocks::set_zero() {
  for (auto& c : context_transforms) c.setZero();
  context_factors.setZero();
  target_factors.setZero();
  word_bias.setZero();
  class_vectors.setZero();
  class_bias.setZero();
}

std::vector<BlockRef> ParameterBlocks::blocks() {
  std::vector<BlockRef> out;
  for (size_t j = 0; j < context_transforms.size(); ++j)
    out.push_back({"C" + std::to_string(j + 1), context_transforms[j].data(),
                   static_cast<size_t>(context_transforms[j].size()), false});
  out.push_back({"Qf", context_factors.data(), static_cast<size_t>(context_factors.size()), false});
  out.push_back({"Rf", target_factors.data(), static_cast<size_t>(target_factors.size()), false});
  out.push_back({"b", word_bias.data(), static_cast<size_t>(word_bias.size()), true});
  out.push_back({"S", class_vectors.data(), static_cast<size_t>(class_vectors.size()), false});
  out.push_back({"t", class_bias.data(), static_cast<size_t>(class_bias.size()), true});
  return out;
}

std::vector<ConstBlockRef> ParameterBlocks::blocks() const {
  std::vector<ConstBlockRef> out;
  for (auto& b : const_cast<ParameterBlocks*>(this)->blocks())
    out.push_back({std::move(b.name), b.data, b.size, b.is_bias});
  return out;
}

size_t ParameterBlocks::num_values() const {
  size_t n = 0;
  for (const auto& c : context_transforms) n += c.size();
  return n + context_factors.size() + target_factors.size() + word_bias.size() +
         class_vectors.size() + class_bias.size();
}

bool ParameterBlocks::operator==(const ParameterBlocks& other) const {
  if (context_transforms.size() != other.context_transforms.size()) return false;
  for (size_t j = 0; j < context_transforms.size(); ++j)
    if (context_transforms[j] != other.context_transforms[j]) return false;
  return context_factors == other.context_factors && target_factors == other.target_factors &&
         word_bias == other.word_bias && class_vectors == other.class_vectors &&
         class_bias == other.class_bias;
}

Model::Model(ModelConfig config, Vocabulary vocab, Factorization factorization,
             std::optional<ClassPartition> partition)
    : config_(config), vocab_(std::move(vocab)), factorization_(std::move(factorization)) {
  config_.validate();
  const size_t num_words = vocab_.size();
  if (factorization_.words.num_words() != num_words)
    throw MismatchError("factorization covers " + std::to_string(factorization_.words.num_words()) +
                        " words but the vocabulary has " + std::to_string(num_words));
  if (factorization_.words.num_factors() != factorization_.factors.size())
    throw MismatchError("factorization and factor vocabulary disagree on |F|");
  if (config_.class_based) {
    if (!partition) throw MismatchError("class-based model requires a class partition");
    if (partition->num_words() != num_words)
      throw MismatchError("partition covers " + std::to_string(partition->num_words()) +
                          " words but the vocabulary has " + std::to_string(num_words));
    partition_ = std::move(partition);
  }

  const auto d = static_cast<Eigen::Index>(config_.dim);
  const auto num_factors = static_cast<Eigen::Index>(factorization_.factors.size());
  const auto nw = static_cast<Eigen::Index>(num_words);
  params_.context_transforms.assign(config_.order - 1, Matrix::Zero(d, d));
  params_.context_factors = Table::Zero(config_.context_additive ? num_factors : nw, d);
  params_.target_factors = Table::Zero(config_.output_additive ? num_factors : nw, d);
  params_.word_bias = Vector::Zero(nw);
  const auto num_classes = static_cast<Eigen::Index>(partition_ ? partition_->num_classes() : 0);
  params_.class_vectors = Table::Zero(num_classes, d);
  params_.class_bias = Vector::Zero(num_classes);

  for (WordId w = 0; w < static_cast<WordId>(num_words); ++w)
    if (Vocabulary::scorable(w)) scorable_words_.push_back(w);
  if (partition_) {
    scorable_members_.resize(partition_->num_classes());
    for (ClassId c = 0; c < static_cast<ClassId>(partition_->num_classes()); ++c) {
      for (WordId w : partition_->members(c))
        if (Vocabulary::scorable(w)) scorable_members_[c].push_back(w);
      if (!scorable_members_[c].empty()) class_scope_.push_back(c);
    }
  }
  compile();
}

void Model::compile() {
  if (config_.context_additive)
    params_.context_words = compile_word_table(factorization_.words, params_.context_factors);
  if (config_.output_additive)
    params_.target_words = compile_word_table(factorization_.words, params_.target_factors);
}

uint64_t context_key(std::span<const WordId> context) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (WordId w : context) {
    h ^= static_cast<uint32_t>(w);
    h *= 0x100000001b3ULL;
  }
  return h;
}

PredictionState predict(const Model& model, std::span<const WordId> context) {
  const auto& transforms = model.params().context_transforms;
  if (context.size() != transforms.size())
    throw Error("context length " + std::to_string(context.size()) + " does not match order " +
                std::to_string(model.config().order));
  const Table& q = model.context_table();
  Eigen::Matrix<Real, 1, Eigen::Dynamic> p = Eigen::Matrix<Real, 1, Eigen::Dynamic>::Zero(model.config().dim);
  for (size_t j = 0; j < context.size(); ++j) {
    if (context[j] < 0 || context[j] >= q.rows()) throw Error("context word id out of range");
    p.noalias() += q.row(context[j]) * transforms[j];
  }
  return {p.transpose(), context_key(context)};
}

PredictionState predict_from_vectors(const Model& model, std::span<const Vector> context) {
  const auto& transforms = model.params().context_transforms;
  if (context.size() != transforms.size()) throw Error("context length does not match order");
  Eigen::Matrix<Real, 1, Eigen::Dynamic> p = Eigen::Matrix<Real, 1, Eigen::Dynamic>::Zero(model.config().dim);
  for (size_t j = 0; j < context.size(); ++j) p.noalias() += context[j].transpose() * transforms[j];
  return {p.transpose(), 0};
}

Real score_word(const Model& model, const Vector& p, WordId w) {
  return model.target_table().row(w).dot(p.transpose()) + model.params().word_bias[w];
}

Real score_class(const Model& model, const Vector& p, ClassId c) {
  return model.params().class_vectors.row(c).dot(p.transpose()) + model.params().class_bias[c];
}

Real log_sum_exp(std::span<const Real> values) {
  if (values.empty()) return -std::numeric_limits<Real>::infinity();
  const Real max = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(max)) return max;
  long double sum = 0.0L;
  for (Real v : values) sum += std::exp(static_cast<long double>(v - max));
  return max + static_cast<Real>(std::log(sum));
}

namespace {

thread_local std::vector<Real> scratch;

void count(QueryCounters* counters, size_t n) {
  if (counters) counters->score_computations += n;
}

}  // namespace

Real class_log_normalizer(const Model& model, const Vector& p, QueryCounters* counters) {
  const auto scope = model.class_scope();
  scratch.resize(scope.size());
  for (size_t i = 0; i < scope.size(); ++i) scratch[i] = score_class(model, p, scope[i]);
  count(counters, scope.size());
  return log_sum_exp(scratch);
}

Real word_log_normalizer(const Model& model, const Vector& p, ClassId c, QueryCounters* counters) {
  const auto members = model.scorable_members(c);
  scratch.resize(members.size());
  for (size_t i = 0; i < members.size(); ++i) scratch[i] = score_word(model, p, members[i]);
  count(counters, members.size());
  return log_sum_exp(scratch);
}

Real full_log_normalizer(const Model& model, const Vector& p, QueryCounters* counters) {
  const auto words = model.scorable_words();
  scratch.resize(words.size());
  for (size_t i = 0; i < words.size(); ++i) scratch[i] = score_word(model, p, words[i]);
  count(counters, words.size());
  return log_sum_exp(scratch);
}

NormalizerCache::Entry& NormalizerCache::entry(const Model& model, std::span<const WordId> context,
                                               QueryCounters* counters) {
  std::vector<WordId> key(context.begin(), context.end());
  auto it = entries_.find(key);
  if (it != entries_.end()) {
    ++hits_;
    return it->second;
  }
  ++misses_;
  if (entries_.size() >= max_contexts_) entries_.clear();
  Entry e;
  e.p = predict(model, context).p;
  if (counters) ++counters->predictions;
  return entries_.emplace(std::move(key), std::move(e)).first->second;
}

namespace {

void check_target(const Model& model, WordId w) {
  if (w < 0 || static_cast<size_t>(w) >= model.vocab().size()) throw Error("target word id out of range");
  if (!Vocabulary::scorable(w)) throw Error("the padding symbol cannot be predicted");
}

}  // namespace

Real log_prob_full(const Model& model, std::span<const WordId> context, WordId w,
                   NormalizerCache* cache, QueryCounters* counters) {
  check_target(model, w);
  if (!cache) {
    const Vector p = predict(model, context).p;
    if (counters) ++counters->predictions;
    const Real norm = full_log_normalizer(model, p, counters);
    count(counters, 1);
    return score_word(model, p, w) - norm;
  }
  auto& e = cache->entry(model, context, counters);
  if (!e.full_norm) e.full_norm = full_log_normalizer(model, e.p, counters);
  count(counters, 1);
  return score_word(model, e.p, w) - *e.full_norm;
}

Real log_prob_classed(const Model& model, std::span<const WordId> context, WordId w,
                      NormalizerCache* cache, QueryCounters* counters) {
  check_target(model, w);
  if (!model.config().class_based) throw Error("model is not class-based");
  const ClassId c = model.partition()->class_of(w);
  if (!cache) {
    const Vector p = predict(model, context).p;
    if (counters) ++counters->predictions;
    const Real class_norm = class_log_normalizer(model, p, counters);
    const Real word_norm = word_log_normalizer(model, p, c, counters);
    count(counters, 2);
    return (score_class(model, p, c) - class_norm) + (score_word(model, p, w) - word_norm);
  }
  auto& e = cache->entry(model, context, counters);
  if (!e.class_norm) e.class_norm = class_log_normalizer(model, e.p, counters);
  auto it = e.word_norm.find(c);
  if (it == e.word_norm.end()) it = e.word_norm.emplace(c, word_log_normalizer(model, e.p, c, counters)).first;
  count(counters, 2);
  return (score_class(model, e.p, c) - *e.class_norm) + (score_word(model, e.p, w) - it->second);
}

Real log_prob(const Model& model, std::span<const WordId> context, WordId w, NormalizerCache* cache,
              QueryCounters* counters) {
  return model.config().class_based ? log_prob_classed(model, context, w, cache, counters)
                                    : log_prob_full(model, context, w, cache, counters);
}

Real log_prob_from_prediction(const Model& model, const Vector& p, WordId w, QueryCounters* counters) {
  check_target(model, w);
  if (!model.config().class_based) {
    const Real norm = full_log_normalizer(model, p, counters);
    count(counters, 1);
    return score_word(model, p, w) - norm;
  }
  const ClassId c = model.partition()->class_of(w);
  const Real class_norm = class_log_normalizer(model, p, counters);
  const Real word_norm = word_log_normalizer(model, p, c, counters);
  count(counters, 2);
  return (score_class(model, p, c) - class_norm) + (score_word(model, p, w) - word_norm);
}

Vector full_distribution(const Model& model, std::span<const WordId> context) {
  const Vector p = predict(model, context).p;
  Vector dist = Vector::Zero(static_cast<Eigen::Index>(model.vocab().size()));
  if (!model.config().class_based) {
    const Real norm = full_log_normalizer(model, p);
    for (WordId w : model.scorable_words()) dist[w] = std::exp(score_word(model, p, w) - norm);
    return dist;
  }
  const Real class_norm = class_log_normalizer(model, p);
  for (ClassId c : model.class_scope()) {
    const Real log_pc = score_class(model, p, c) - class_norm;
    const Real word_norm = word_log_normalizer(model, p, c);
    for (WordId w : model.scorable_members(c))
      dist[w] = std::exp(log_pc + (score_word(model, p, w) - word_norm));
  }
  return dist;
}

std::vector<Real> score_instances(const Model& model, const NGramSet& data, int threads) {
  std::vector<Real> out(data.size());
  auto work = [&](size_t begin, size_t end) {
    NormalizerCache cache(size_t{1} << 16);
    for (size_t i = begin; i < end; ++i) out[i] = log_prob(model, data.context(i), data.target(i), &cache);
  };
  const size_t workers = std::max<size_t>(1, std::min<size_t>(static_cast<size_t>(std::max(threads, 1)),
                                                              data.size() / 256 + 1));
  if (workers == 1) {
    work(0, data.size());
    return out;
  }
  std::vector<std::thread> pool;
  const size_t chunk = (data.size() + workers - 1) / workers;
  for (size_t t = 0; t < workers; ++t) {
    const size_t begin = t * chunk, end = std::min(data.size(), begin + chunk);
    if (begin < end) pool.emplace_back(work, begin, end);
  }
  for (auto& th : pool) th.join();
  return out;
}

Real perplexity_of(const Model& model, const NGramSet& data, int threads) {
  if (data.empty()) throw DataError("cannot compute perplexity of an empty set");
  const auto scores = score_instances(model, data, threads);
  long double total = 0.0L;
  for (Real s : scores) total += s;
  return static_cast<Real>(std::exp(-total / static_cast<long double>(scores.size())));
}

Vector context_vector(const Model& model, std::string_view word, const PostHocMap* map, bool compose_oov) {
  const Table& q = model.context_table();
  if (auto id = model.vocab().find(word); id && *id != kPadId) return q.row(*id).transpose();
  if (compose_oov && map && model.config().context_additive) {
    const auto known = map->known_factors(word);
    if (!known.empty()) return compose_vector(model.params().context_factors, known);
  }
  return q.row(kUnkId).transpose();
}

}  // namespace mlbl
