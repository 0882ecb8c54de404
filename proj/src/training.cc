#include "mlbl/training.h"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>

namespace mlbl {

void TrainingConfig::validate() const {
  if (minibatch_size < 1) throw ConfigError("minibatch_size must be at least 1");
  if (!(step_size > 0)) throw ConfigError("step_size must be positive");
  if (!(l2_lambda >= 0)) throw ConfigError("l2_lambda must be non-negative");
  if (nce_noise < 1) throw ConfigError("nce_noise must be at least 1");
  if (!(init_sigma > 0)) throw ConfigError("init_sigma must be positive");
  if (!(adagrad_epsilon > 0)) throw ConfigError("adagrad_epsilon must be positive");
  if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (threads < 1) throw ConfigError("threads must be at least 1");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end)
    throw ConfigError("bad value '" + value + "' for '" + key + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("bad boolean '" + value + "' for '" + key + "'");
}

}  // namespace

bool RunConfig::set(const std::string& key, const std::string& value) {
  auto& m = model;
  auto& t = training;
  if (key == "order") m.order = parse_number<int>(key, value);
  else if (key == "dim") m.dim = parse_number<int>(key, value);
  else if (key == "context_additive") m.context_additive = parse_bool(key, value);
  else if (key == "output_additive") m.output_additive = parse_bool(key, value);
  else if (key == "class_based") m.class_based = parse_bool(key, value);
  else if (key == "variant") {
    std::string v = value;
    m.class_based = v.rfind("CLBL", 0) == 0;
    if (!m.class_based && v.rfind("LBL", 0) != 0) throw ConfigError("unknown variant '" + value + "'");
    v = v.substr(m.class_based ? 4 : 3);
    if (v == "") m.context_additive = m.output_additive = false;
    else if (v == "+c") m.context_additive = true, m.output_additive = false;
    else if (v == "+o") m.context_additive = false, m.output_additive = true;
    else if (v == "++") m.context_additive = m.output_additive = true;
    else throw ConfigError("unknown variant '" + value + "'");
  }
  else if (key == "minibatch_size") t.minibatch_size = parse_number<int>(key, value);
  else if (key == "step_size") t.step_size = parse_number<double>(key, value);
  else if (key == "l2_lambda") t.l2_lambda = parse_number<double>(key, value);
  else if (key == "regularize_biases") t.regularize_biases = parse_bool(key, value);
  else if (key == "nce_noise") t.nce_noise = parse_number<int>(key, value);
  else if (key == "init_sigma") t.init_sigma = parse_number<double>(key, value);
  else if (key == "adagrad_epsilon") t.adagrad_epsilon = parse_number<double>(key, value);
  else if (key == "max_epochs") t.max_epochs = parse_number<int>(key, value);
  else if (key == "seed") t.seed = parse_number<uint64_t>(key, value);
  else if (key == "threads") t.threads = parse_number<int>(key, value);
  else return false;
  return true;
}

void RunConfig::apply(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  const std::string key = trim(assignment.substr(0, eq));
  if (!set(key, trim(assignment.substr(eq + 1)))) throw ConfigError("unknown setting '" + key + "'");
}

void RunConfig::write(std::ostream& out) const {
  const auto b = [](bool v) { return v ? "true" : "false"; };
  out << "order = " << model.order << '\n'
      << "dim = " << model.dim << '\n'
      << "context_additive = " << b(model.context_additive) << '\n'
      << "output_additive = " << b(model.output_additive) << '\n'
      << "class_based = " << b(model.class_based) << '\n'
      << "minibatch_size = " << training.minibatch_size << '\n'
      << "step_size = " << training.step_size << '\n'
      << "l2_lambda = " << training.l2_lambda << '\n'
      << "regularize_biases = " << b(training.regularize_biases) << '\n'
      << "nce_noise = " << training.nce_noise << '\n'
      << "init_sigma = " << training.init_sigma << '\n'
      << "adagrad_epsilon = " << training.adagrad_epsilon << '\n'
      << "max_epochs = " << training.max_epochs << '\n'
      << "seed = " << training.seed << '\n'
      << "threads = " << training.threads << '\n';
}

RunConfig read_run_config(std::istream& in) {
  RunConfig config;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    try {
      config.apply(line);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return config;
}

void init_params(Model& model, uint64_t seed, double sigma) {
  auto& params = model.params();
  Rng rng(seed);
  std::normal_distribution<double> gaussian(0.0, sigma);
  auto fill = [&](auto& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = gaussian(rng.engine());
  };
  for (auto& c : params.context_transforms) fill(c);
  fill(params.context_factors);
  fill(params.target_factors);
  fill(params.class_vectors);

  const auto& vocab = model.vocab();
  double tokens = 0;
  for (WordId w : model.scorable_words()) tokens += static_cast<double>(vocab.count(w));
  const double words = static_cast<double>(model.scorable_words().size());
  params.word_bias.setZero();
  for (WordId w : model.scorable_words())
    params.word_bias[w] = std::log((static_cast<double>(vocab.count(w)) + 1.0) / (tokens + words));

  params.class_bias.setZero();
  const auto scope = model.class_scope();
  for (ClassId c : scope) {
    double count = 0;
    for (WordId w : model.scorable_members(c)) count += static_cast<double>(vocab.count(w));
    params.class_bias[c] = std::log((count + 1.0) / (tokens + static_cast<double>(scope.size())));
  }
  model.compile();
}

Gradients zero_like(const Model& model) {
  Gradients g = model.params();
  g.set_zero();
  return g;
}

void add_l2(const ParameterBlocks& params, const LossOptions& options, Loss& loss, Gradients& grad) {
  if (options.l2_lambda == 0) return;
  const auto theta = params.blocks();
  const auto g = grad.blocks();
  long double sum = 0;
  for (size_t b = 0; b < theta.size(); ++b) {
    if (theta[b].is_bias && !options.regularize_biases) continue;
    for (size_t i = 0; i < theta[b].size; ++i) {
      const Real x = theta[b].data[i];
      sum += static_cast<long double>(x) * x;
      g[b].data[i] += 2.0 * options.l2_lambda * x;
    }
  }
  loss.l2 = options.l2_lambda * static_cast<Real>(sum);
}

namespace {

// Softmax of `row` in place; returns its log-normalizer.
Real softmax_row(Eigen::Ref<Eigen::Matrix<Real, 1, Eigen::Dynamic>> row) {
  const Real lse = log_sum_exp(std::span<const Real>(row.data(), static_cast<size_t>(row.size())));
  row = (row.array() - lse).exp().matrix();
  return lse;
}

struct Forward {
  std::vector<Matrix> x;  // gathered context vectors, one B x d matrix per position
  Matrix p;
};

Forward forward(const Model& model, const NGramSet& data, std::span<const size_t> batch) {
  const auto& transforms = model.params().context_transforms;
  const Table& q = model.context_table();
  const auto b = static_cast<Eigen::Index>(batch.size());
  const auto d = static_cast<Eigen::Index>(model.config().dim);
  Forward f;
  f.p = Matrix::Zero(b, d);
  f.x.assign(transforms.size(), Matrix(b, d));
  for (size_t j = 0; j < transforms.size(); ++j) {
    for (Eigen::Index i = 0; i < b; ++i) f.x[j].row(i) = q.row(data.context(batch[i])[j]);
    f.p.noalias() += f.x[j] * transforms[j];
  }
  return f;
}

// Gradient of M * table: row f of `factor_grad` gathers multiplicity times
// the word rows of every touched word containing f, in word id order.
void backprop_factors(const WordFactorization& m, const Table& word_grad, const std::vector<char>& touched,
                      Table& factor_grad) {
  for (size_t v = 0; v < touched.size(); ++v) {
    if (!touched[v]) continue;
    for (const auto& [f, mult] : m.row(static_cast<WordId>(v)))
      factor_grad.row(f) += static_cast<Real>(mult) * word_grad.row(v);
  }
}

void backward_context(const Model& model, const NGramSet& data, std::span<const size_t> batch,
                      const Forward& f, const Matrix& dp, Gradients& grad) {
  const auto& transforms = model.params().context_transforms;
  const bool additive = model.config().context_additive;
  const size_t num_words = model.vocab().size();
  Table word_grad;
  if (additive) word_grad = Table::Zero(static_cast<Eigen::Index>(num_words), model.config().dim);
  Table& gq = additive ? word_grad : grad.context_factors;
  std::vector<char> touched(num_words, 0);
  for (size_t j = 0; j < transforms.size(); ++j) {
    grad.context_transforms[j].noalias() += f.x[j].transpose() * dp;
    const Matrix dx = dp * transforms[j].transpose();
    for (size_t i = 0; i < batch.size(); ++i) {
      const WordId v = data.context(batch[i])[j];
      gq.row(v) += dx.row(static_cast<Eigen::Index>(i));
      touched[v] = 1;
    }
  }
  if (additive) backprop_factors(model.factorization().words, word_grad, touched, grad.context_factors);
}

void check_targets(const Model& model, const NGramSet& data, std::span<const size_t> batch) {
  for (size_t i : batch) {
    if (i >= data.size()) throw Error("batch index out of range");
    const WordId w = data.target(i);
    if (w < 0 || static_cast<size_t>(w) >= model.vocab().size() || !Vocabulary::scorable(w))
      throw Error("invalid training target");
  }
}

}  // namespace

Loss minibatch_loss_and_grad(const Model& model, const NGramSet& data, std::span<const size_t> batch,
                             const LossOptions& options, Gradients& grad) {
  check_targets(model, data, batch);
  grad.set_zero();
  Loss loss;
  const auto& params = model.params();
  const auto d = static_cast<Eigen::Index>(model.config().dim);
  const size_t num_words = model.vocab().size();
  const Forward f = forward(model, data, batch);
  Matrix dp = Matrix::Zero(f.p.rows(), d);
  long double nll = 0;

  // Groups of batch positions sharing a normalization scope over words.
  std::vector<std::span<const WordId>> scopes;
  std::vector<std::vector<Eigen::Index>> groups;
  if (model.config().class_based) {
    const auto& partition = *model.partition();
    const auto class_scope = model.class_scope();
    const auto k = static_cast<Eigen::Index>(class_scope.size());
    std::vector<Eigen::Index> position(partition.num_classes(), -1);
    Table s(k, d);
    Eigen::Matrix<Real, 1, Eigen::Dynamic> t(k);
    for (Eigen::Index c = 0; c < k; ++c) {
      position[class_scope[c]] = c;
      s.row(c) = params.class_vectors.row(class_scope[c]);
      t[c] = params.class_bias[class_scope[c]];
    }
    Matrix scores = f.p * s.transpose();
    scores.rowwise() += t;
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
      const Eigen::Index target = position[partition.class_of(data.target(batch[i]))];
      const Real raw = scores(i, target);
      nll += softmax_row(scores.row(i)) - raw;
      scores(i, target) -= 1.0;
    }
    const Matrix gs = scores.transpose() * f.p;
    const Eigen::Matrix<Real, 1, Eigen::Dynamic> gt = scores.colwise().sum();
    for (Eigen::Index c = 0; c < k; ++c) {
      grad.class_vectors.row(class_scope[c]) = gs.row(c);
      grad.class_bias[class_scope[c]] = gt[c];
    }
    dp.noalias() += scores * s;

    scopes.resize(partition.num_classes());
    groups.resize(partition.num_classes());
    for (ClassId c : class_scope) scopes[c] = model.scorable_members(c);
    for (Eigen::Index i = 0; i < f.p.rows(); ++i)
      groups[partition.class_of(data.target(batch[i]))].push_back(i);
  } else {
    scopes.push_back(model.scorable_words());
    groups.emplace_back(f.p.rows());
    std::iota(groups[0].begin(), groups[0].end(), 0);
  }

  const bool additive = model.config().output_additive;
  const Table& r = model.target_table();
  Table word_grad;
  if (additive) word_grad = Table::Zero(static_cast<Eigen::Index>(num_words), d);
  Table& gr = additive ? word_grad : grad.target_factors;
  std::vector<char> touched(num_words, 0);
  std::vector<Eigen::Index> position(num_words, -1);
  for (size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].empty()) continue;
    const auto members = scopes[g];
    const auto m = static_cast<Eigen::Index>(members.size());
    const auto n = static_cast<Eigen::Index>(groups[g].size());
    Table rg(m, d);
    Eigen::Matrix<Real, 1, Eigen::Dynamic> bg(m);
    for (Eigen::Index k = 0; k < m; ++k) {
      position[members[k]] = k;
      rg.row(k) = r.row(members[k]);
      bg[k] = params.word_bias[members[k]];
    }
    Matrix pg(n, d);
    for (Eigen::Index i = 0; i < n; ++i) pg.row(i) = f.p.row(groups[g][i]);
    Matrix scores = pg * rg.transpose();
    scores.rowwise() += bg;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index target = position[data.target(batch[groups[g][i]])];
      const Real raw = scores(i, target);
      nll += softmax_row(scores.row(i)) - raw;
      scores(i, target) -= 1.0;
    }
    const Matrix grg = scores.transpose() * pg;
    const Eigen::Matrix<Real, 1, Eigen::Dynamic> gbg = scores.colwise().sum();
    for (Eigen::Index k = 0; k < m; ++k) {
      gr.row(members[k]) += grg.row(k);
      grad.word_bias[members[k]] += gbg[k];
      touched[members[k]] = 1;
    }
    const Matrix dpg = scores * rg;
    for (Eigen::Index i = 0; i < n; ++i) dp.row(groups[g][i]) += dpg.row(i);
  }
  if (additive) backprop_factors(model.factorization().words, word_grad, touched, grad.target_factors);

  backward_context(model, data, batch, f, dp, grad);
  loss.data = static_cast<Real>(nll);
  add_l2(params, options, loss, grad);
  return loss;
}

NoiseDistribution::NoiseDistribution(const Vocabulary& vocab) : log_prob_(vocab.size()) {
  double total = 0;
  for (size_t w = 0; w < vocab.size(); ++w) {
    if (!Vocabulary::scorable(static_cast<WordId>(w))) continue;
    total += static_cast<double>(vocab.count(static_cast<WordId>(w))) + 1.0;
    words_.push_back(static_cast<WordId>(w));
    cumulative_.push_back(total);
  }
  for (size_t w = 0; w < vocab.size(); ++w)
    log_prob_[w] = Vocabulary::scorable(static_cast<WordId>(w))
                       ? std::log((static_cast<double>(vocab.count(static_cast<WordId>(w))) + 1.0) / total)
                       : -std::numeric_limits<Real>::infinity();
}

WordId NoiseDistribution::sample(Rng& rng) const {
  const double u = rng.uniform() * cumulative_.back();
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  if (it == cumulative_.end()) --it;
  return words_[static_cast<size_t>(it - cumulative_.begin())];
}

std::vector<WordId> draw_noise(const NoiseDistribution& noise, size_t num_instances, int k, uint64_t seed) {
  if (k < 1) throw ConfigError("NCE needs at least one noise sample");
  Rng rng(seed);
  std::vector<WordId> out(num_instances * static_cast<size_t>(k));
  for (auto& w : out) w = noise.sample(rng);
  return out;
}

namespace {

// -log(sigmoid(-x)) = log(1 + e^x), without overflow.
Real softplus(Real x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
Real sigmoid(Real x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const Real e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Loss nce_loss_and_grad(const Model& model, const NGramSet& data, std::span<const size_t> batch,
                       const NoiseDistribution& noise, std::span<const WordId> noise_words, int k,
                       const LossOptions& options, Gradients& grad) {
  if (k < 1) throw ConfigError("NCE needs at least one noise sample");
  if (noise_words.size() != batch.size() * static_cast<size_t>(k))
    throw Error("expected k noise words per instance");
  check_targets(model, data, batch);
  grad.set_zero();
  const auto& params = model.params();
  const auto d = static_cast<Eigen::Index>(model.config().dim);
  const size_t num_words = model.vocab().size();
  const Forward f = forward(model, data, batch);
  Matrix dp = Matrix::Zero(f.p.rows(), d);

  const bool additive = model.config().output_additive;
  const Table& r = model.target_table();
  Table word_grad;
  if (additive) word_grad = Table::Zero(static_cast<Eigen::Index>(num_words), d);
  Table& gr = additive ? word_grad : grad.target_factors;
  std::vector<char> touched(num_words, 0);
  const Real log_k = std::log(static_cast<Real>(k));
  long double total = 0;

  auto visit = [&](Eigen::Index i, WordId x, bool positive) {
    const Real delta = f.p.row(i).dot(r.row(x)) + params.word_bias[x] - log_k - noise.log_prob(x);
    Real dnu;
    if (positive) {
      total += softplus(-delta);
      dnu = sigmoid(delta) - 1.0;
    } else {
      total += softplus(delta);
      dnu = sigmoid(delta);
    }
    gr.row(x) += dnu * f.p.row(i);
    grad.word_bias[x] += dnu;
    dp.row(i) += dnu * r.row(x);
    touched[x] = 1;
  };
  for (size_t i = 0; i < batch.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    visit(row, data.target(batch[i]), true);
    for (int s = 0; s < k; ++s) {
      const WordId x = noise_words[i * static_cast<size_t>(k) + static_cast<size_t>(s)];
      if (x < 0 || static_cast<size_t>(x) >= num_words || !Vocabulary::scorable(x))
        throw Error("invalid noise word");
      visit(row, x, false);
    }
  }
  if (additive) backprop_factors(model.factorization().words, word_grad, touched, grad.target_factors);

  backward_context(model, data, batch, f, dp, grad);
  Loss loss;
  loss.data = static_cast<Real>(total);
  add_l2(params, options, loss, grad);
  return loss;
}

void adagrad_step(ParameterBlocks& params, ParameterBlocks& accum, const Gradients& grad, double step,
                  double epsilon) {
  auto theta = params.blocks();
  auto acc = accum.blocks();
  const auto g = grad.blocks();
  if (theta.size() != acc.size() || theta.size() != g.size()) throw Error("parameter block mismatch");
  for (size_t b = 0; b < theta.size(); ++b) {
    if (theta[b].size != acc[b].size || theta[b].size != g[b].size) throw Error("parameter shape mismatch");
    for (size_t i = 0; i < theta[b].size; ++i) {
      const Real gi = g[b].data[i];
      if (gi == 0) continue;
      acc[b].data[i] += gi * gi;
      theta[b].data[i] -= step * gi / (std::sqrt(acc[b].data[i]) + epsilon);
    }
  }
}

TrainResult train(Model& model, const NGramSet& train_data, const NGramSet* dev_data,
                  const TrainingConfig& config, const TrainCallbacks& callbacks) {
  config.validate();
  if (train_data.empty()) throw DataError("empty training data");
  if (train_data.order() != model.config().order) throw MismatchError("training n-gram order differs from the model");
  const bool use_nce = !model.config().class_based;
  const LossOptions options{config.l2_lambda, config.regularize_biases};

  TrainState state;
  state.accum = zero_like(model);
  Gradients grad = zero_like(model);
  std::vector<size_t> order(train_data.size());
  std::iota(order.begin(), order.end(), size_t{0});
  Rng rng(config.seed);
  std::optional<NoiseDistribution> noise;
  if (use_nce) noise.emplace(model.vocab());

  TrainResult result;
  ParameterBlocks previous = model.params();
  Real previous_dev = std::numeric_limits<Real>::quiet_NaN();
  uint64_t batch_count = 0;
  const size_t batch_size = static_cast<size_t>(config.minibatch_size);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    state.epoch = epoch;
    const auto start = std::chrono::steady_clock::now();
    rng.shuffle(std::span<size_t>(order));
    long double loss_sum = 0;
    for (size_t begin = 0; begin < order.size(); begin += batch_size) {
      const std::span<const size_t> batch(order.data() + begin, std::min(batch_size, order.size() - begin));
      Loss loss;
      if (use_nce) {
        const auto noise_words = draw_noise(*noise, batch.size(), config.nce_noise,
                                            derive_seed(config.seed, ++batch_count));
        loss = nce_loss_and_grad(model, train_data, batch, *noise, noise_words, config.nce_noise, options, grad);
      } else {
        loss = minibatch_loss_and_grad(model, train_data, batch, options, grad);
      }
      if (!std::isfinite(loss.total())) throw Error("training diverged (non-finite loss)");
      adagrad_step(model.params(), state.accum, grad, config.step_size, config.adagrad_epsilon);
      model.compile();
      loss_sum += loss.data;
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    Real dev = std::numeric_limits<Real>::quiet_NaN();
    if (callbacks.dev_ppl)
      dev = callbacks.dev_ppl(model, epoch);
    else if (dev_data)
      dev = perplexity_of(model, *dev_data, config.threads);
    const EpochRecord record{epoch, static_cast<Real>(loss_sum / static_cast<long double>(order.size())), dev,
                             seconds};
    result.history.push_back(record);
    if (callbacks.on_epoch) callbacks.on_epoch(record);

    if (epoch > 1 && !std::isnan(dev) && !std::isnan(previous_dev) && dev > previous_dev) {
      static_cast<ParameterBlocks&>(model.params()) = previous;
      model.compile();
      result.stopped_early = true;
      break;
    }
    result.best_epoch = epoch;
    state.best_dev_ppl = dev;
    previous_dev = dev;
    if (epoch < config.max_epochs) previous = model.params();
  }
  return result;
}

}  // namespace mlbl
