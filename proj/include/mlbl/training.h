#ifndef MLBL_TRAINING_H
#define MLBL_TRAINING_H

#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mlbl/model.h"

namespace mlbl {

struct TrainingConfig {
  int minibatch_size = 10000;
  double step_size = 0.05;
  double l2_lambda = 1e-5;
  bool regularize_biases = true;
  int nce_noise = 10;
  double init_sigma = 0.01;
  double adagrad_epsilon = 1e-8;
  int max_epochs = 10;
  uint64_t seed = 1;
  int threads = 1;

  void validate() const;
};

/// Model and training settings read from a flat `key = value` file. Lines
/// starting with '#' are comments.
struct RunConfig {
  ModelConfig model;
  TrainingConfig training;

  // Returns false for an unknown key; throws DataError for a bad value.
  bool set(const std::string& key, const std::string& value);
  // "key=value"
  void apply(const std::string& assignment);
  void write(std::ostream& out) const;
};

RunConfig read_run_config(std::istream& in);

// Laplace-smoothed log unigram biases, Gaussian draws for everything else
// (in the order C_1..C_{n-1}, Qf, Rf, S), then recompiles.
void init_params(Model& model, uint64_t seed, double sigma);

typedef ParameterBlocks Gradients;

// Zero-filled blocks with the model's parameter shapes.
Gradients zero_like(const Model& model);

struct LossOptions {
  double l2_lambda = 0.0;
  bool regularize_biases = true;
};

struct Loss {
  Real data = 0;  // summed negative log-likelihood (or NCE loss) of the batch
  Real l2 = 0;
  Real total() const { return data + l2; }
};

// Adds lambda * |theta|^2 to the loss and 2 lambda theta to `grad`.
void add_l2(const ParameterBlocks& params, const LossOptions& options, Loss& loss, Gradients& grad);

/// Exact class-decomposed loss over the instances `batch` of `data`, with
/// gradients for every block written into `grad` (overwritten). The model's
/// compiled tables must be current.
Loss minibatch_loss_and_grad(const Model& model, const NGramSet& data, std::span<const size_t> batch,
                             const LossOptions& options, Gradients& grad);

/// Smoothed training unigram over scorable words, used as the NCE noise.
class NoiseDistribution {
 public:
  explicit NoiseDistribution(const Vocabulary& vocab);

  WordId sample(Rng& rng) const;
  Real log_prob(WordId w) const { return log_prob_[w]; }

 private:
  std::vector<WordId> words_;
  std::vector<double> cumulative_;
  std::vector<Real> log_prob_;
};

// Draws k noise words per instance, in batch order.
std::vector<WordId> draw_noise(const NoiseDistribution& noise, size_t num_instances, int k, uint64_t seed);

/// Noise-contrastive loss for classless models using unnormalized scores;
/// `noise_words` holds k draws per batch instance.
Loss nce_loss_and_grad(const Model& model, const NGramSet& data, std::span<const size_t> batch,
                       const NoiseDistribution& noise, std::span<const WordId> noise_words, int k,
                       const LossOptions& options, Gradients& grad);

struct TrainState {
  ParameterBlocks accum;  // AdaGrad sums of squared gradients
  int epoch = 0;
  Real best_dev_ppl = 0;
};

// accum += g^2; theta -= step * g / (sqrt(accum) + eps). Zero gradients leave
// both untouched.
void adagrad_step(ParameterBlocks& params, ParameterBlocks& accum, const Gradients& grad, double step,
                  double epsilon);

struct EpochRecord {
  int epoch;
  Real train_loss;  // mean data loss per instance over the epoch
  Real dev_ppl;     // NaN without a dev set
  double seconds;
};

struct TrainCallbacks {
  // Replaces dev-set evaluation; receives the model after the epoch.
  std::function<Real(const Model&, int epoch)> dev_ppl;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  bool stopped_early = false;
};

/// Minibatch AdaGrad over shuffled instances, starting from the model's
/// current parameters. After each epoch the dev perplexity is measured;
/// training stops at the first epoch that is worse than the one before it and
/// the model is left holding that previous epoch's parameters.
TrainResult train(Model& model, const NGramSet& train_data, const NGramSet* dev_data,
                  const TrainingConfig& config, const TrainCallbacks& callbacks = {});

}  // namespace mlbl

#endif
