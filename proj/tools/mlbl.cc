// Command-line driver: preprocess, cluster, train, ppl, sim, score, export,
// neighbors.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "mlbl/clustering.h"
#include "mlbl/corpus.h"
#include "mlbl/eval.h"
#include "mlbl/model.h"
#include "mlbl/model_io.h"
#include "mlbl/morphology.h"
#include "mlbl/training.h"

using namespace mlbl;
using nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kInternal = 1, kUsage = 2, kData = 3, kMismatch = 4, kFormat = 5 };

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  return out;
}

std::vector<Sentence> read_corpus(const std::string& path, const ReadOptions& options = {}) {
  auto in = open_in(path);
  return read_sentences(in, options);
}

std::string sha256_file(const std::string& path) {
  auto in = open_in(path);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

// Run record written next to each artifact as `<artifact>.manifest.json`.
class Manifest {
 public:
  explicit Manifest(std::string command) : start_(std::chrono::steady_clock::now()) {
    doc_["command"] = std::move(command);
    doc_["version"] = MLBL_VERSION;
    doc_["inputs"] = json::object();
    doc_["config"] = json::object();
  }

  void input(const std::string& role, const std::string& path) {
    doc_["inputs"][role] = {{"path", path}, {"sha256", sha256_file(path)}};
  }
  json& config() { return doc_["config"]; }
  void set(const std::string& key, json value) { doc_[key] = std::move(value); }
  void timing(const std::string& phase, double seconds) { doc_["timings"][phase] = seconds; }

  void write(const std::string& artifact) {
    doc_["timings"]["total_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    auto out = open_out(artifact + ".manifest.json");
    out << doc_.dump(2) << '\n';
  }

 private:
  json doc_;
  std::chrono::steady_clock::time_point start_;
};

Vocabulary load_vocab(const std::string& path) {
  auto in = open_in(path);
  return Vocabulary::read(in);
}

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// preprocess

struct PreprocessArgs {
  std::string input, out, segmentation;
  double kappa = 0.05;
  uint64_t seed = 1;
  bool cyrillic = false;
};

void cmd_preprocess(const PreprocessArgs& a) {
  Manifest manifest("preprocess");
  manifest.input("corpus", a.input);
  if (a.kappa < 0 || a.kappa > 1) throw ConfigError("--kappa must lie in [0, 1]");
  const auto sentences = read_corpus(a.input, {a.cyrillic});
  const Vocabulary vocab = build_vocabulary(sentences, a.kappa, a.seed);
  std::optional<Segmentations> segs;
  if (!a.segmentation.empty()) {
    manifest.input("segmentation", a.segmentation);
    auto in = open_in(a.segmentation);
    segs = parse_segmentations(in);
  }
  const Factorization fz = build_factorization(vocab, segs ? &*segs : nullptr);

  auto vout = open_out(a.out + ".vocab");
  vocab.write(vout);
  auto fout = open_out(a.out + ".factors");
  write_factor_vocabulary(fout, fz.factors);
  auto mout = open_out(a.out + ".mu");
  write_mu_table(mout, vocab, fz);

  manifest.config() = {{"kappa", a.kappa}, {"cyrillic_filter", a.cyrillic}};
  manifest.set("seed", a.seed);
  manifest.set("outputs", {a.out + ".vocab", a.out + ".factors", a.out + ".mu"});
  manifest.write(a.out);
  std::cerr << "vocabulary: " << vocab.size() << " types, factors: " << fz.factors.size() << '\n';
}

// cluster

struct ClusterArgs {
  std::string input, vocab, method = "brown", partition_in, out;
  int classes = 0;
  int max_iters = 20;
};

void cmd_cluster(const ClusterArgs& a) {
  Manifest manifest("cluster");
  manifest.input("vocab", a.vocab);
  const Vocabulary vocab = load_vocab(a.vocab);
  const int k = a.classes > 0 ? a.classes : default_num_classes(vocab.size());
  ClassPartition partition;
  if (a.method == "brown") {
    if (a.input.empty()) throw ConfigError("--method brown needs --input");
    manifest.input("corpus", a.input);
    const auto sentences = read_corpus(a.input);
    std::vector<std::vector<WordId>> ids;
    ids.reserve(sentences.size());
    for (const auto& s : sentences) ids.push_back(vocab.map(s));
    const auto counts = BigramCounts::from_sentences(ids, vocab.size());
    partition = brown_cluster(counts, k, a.max_iters);
    std::cerr << "average mutual information: " << average_mutual_information(counts, partition) << " nats\n";
  } else if (a.method == "freq") {
    partition = frequency_bin(vocab, k);
  } else if (a.method == "file") {
    if (a.partition_in.empty()) throw ConfigError("--method file needs --partition-in");
    manifest.input("partition", a.partition_in);
    auto in = open_in(a.partition_in);
    partition = load_partition(in, vocab);
  } else {
    throw ConfigError("unknown clustering method '" + a.method + "'");
  }
  auto out = open_out(a.out);
  partition.write(out, vocab);
  manifest.config() = {{"method", a.method}, {"classes", partition.num_classes()}, {"max_iters", a.max_iters}};
  manifest.write(a.out);
}

// train

struct TrainArgs {
  std::string config, train, dev, vocab, mu, partition, out;
  std::vector<std::string> overrides;
  int threads = 0;
  bool dump_config = false;
};

void cmd_train(const TrainArgs& a) {
  RunConfig config;
  if (!a.config.empty()) {
    auto in = open_in(a.config);
    config = read_run_config(in);
  }
  for (const auto& o : a.overrides) config.apply(o);
  if (a.threads > 0) config.training.threads = a.threads;
  if (a.dump_config) {
    config.write(std::cout);
    return;
  }
  for (const auto* required : {&a.train, &a.vocab, &a.out})
    if (required->empty()) throw ConfigError("train needs --train, --vocab and --out");
  config.model.validate();
  config.training.validate();

  Manifest manifest("train");
  if (!a.config.empty()) manifest.input("config", a.config);
  manifest.input("train", a.train);
  manifest.input("vocab", a.vocab);
  Vocabulary vocab = load_vocab(a.vocab);
  Factorization fz;
  if (!a.mu.empty()) {
    manifest.input("mu", a.mu);
    auto in = open_in(a.mu);
    fz = read_mu_table(in, vocab);
  } else {
    fz = build_factorization(vocab, nullptr);
  }
  std::optional<ClassPartition> partition;
  if (config.model.class_based) {
    if (a.partition.empty()) throw ConfigError("class-based models need --partition");
    manifest.input("partition", a.partition);
    auto in = open_in(a.partition);
    partition = load_partition(in, vocab);
  }

  const int order = config.model.order;
  const NGramSet train_data = extract_ngrams(read_corpus(a.train), vocab, order);
  std::optional<NGramSet> dev_data;
  if (!a.dev.empty()) {
    manifest.input("dev", a.dev);
    dev_data = extract_ngrams(read_corpus(a.dev), vocab, order);
    if (dev_data->empty()) throw DataError("development set is empty");
  }

  Model model(config.model, std::move(vocab), std::move(fz), std::move(partition));
  init_params(model, config.training.seed, config.training.init_sigma);
  std::cerr << model.config().variant() << ": |V|=" << model.vocab().size()
            << " |F|=" << model.factorization().factors.size()
            << " |C|=" << (model.partition() ? model.partition()->num_classes() : 0)
            << " instances=" << train_data.size() << '\n';

  TrainCallbacks callbacks;
  callbacks.on_epoch = [&](const EpochRecord& r) {
    char line[160];
    std::snprintf(line, sizeof line, "epoch %d  train_loss %.6f  dev_ppl %.4f  time %.2fs\n", r.epoch,
                  r.train_loss, r.dev_ppl, r.seconds);
    std::cerr << line;
    manifest.timing("epoch_" + std::to_string(r.epoch), r.seconds);
  };
  const TrainResult result = train(model, train_data, dev_data ? &*dev_data : nullptr, config.training, callbacks);
  if (result.stopped_early)
    std::cerr << "dev perplexity increased; keeping epoch " << result.best_epoch << '\n';

  save_model(model, a.out);
  std::ostringstream cfg;
  config.write(cfg);
  manifest.config() = cfg.str();
  manifest.set("seed", config.training.seed);
  manifest.set("best_epoch", result.best_epoch);
  json history = json::array();
  for (const auto& r : result.history)
    history.push_back({{"epoch", r.epoch}, {"train_loss", r.train_loss},
                       {"dev_ppl", std::isnan(r.dev_ppl) ? json(nullptr) : json(r.dev_ppl)}});
  manifest.set("history", history);
  manifest.write(a.out);
}

// ppl

struct PplArgs {
  std::string model, test, train_counts, labels, keep_labels, json_out;
  bool by_freq = false;
  int threads = 1;
};

void cmd_ppl(const PplArgs& a) {
  const Model model = load_model(a.model);
  const auto test = read_corpus(a.test);
  EvalReport report;
  std::string title = "group";
  if (a.by_freq && !a.labels.empty()) throw ConfigError("--by-freq and --by-label are exclusive");
  if (a.by_freq) {
    TypeCounts counts;
    if (!a.train_counts.empty()) {
      counts = count_types(read_corpus(a.train_counts));
    } else {
      const auto& vocab = model.vocab();
      for (size_t w = 0; w < vocab.size(); ++w)
        if (w != static_cast<size_t>(kUnkId) && w != static_cast<size_t>(kPadId))
          counts[vocab.type(static_cast<WordId>(w))] = vocab.count(static_cast<WordId>(w));
    }
    report = ppl_by_frequency(model, test, counts, a.threads);
    title = "log10(count)";
  } else if (!a.labels.empty()) {
    auto in = open_in(a.labels);
    std::vector<Sentence> labels;
    std::string line;
    while (std::getline(in, line)) {
      std::istringstream ss(line);
      Sentence s;
      for (std::string t; ss >> t;) s.push_back(t);
      labels.push_back(std::move(s));
    }
    std::set<std::string> keep;
    std::istringstream ks(a.keep_labels);
    for (std::string t; std::getline(ks, t, ',');)
      if (!t.empty()) keep.insert(t);
    report = ppl_by_label(model, test, labels, a.keep_labels.empty() ? nullptr : &keep, a.threads);
    title = "label";
  } else {
    report = perplexity(model, test, a.threads);
  }
  write_report_table(std::cout, report, title);
  if (!a.json_out.empty()) {
    auto out = open_out(a.json_out);
    write_report_jsonl(out, report);
    Manifest manifest("ppl");
    manifest.input("model", a.model);
    manifest.input("test", a.test);
    manifest.config() = {{"by_freq", a.by_freq}, {"by_label", !a.labels.empty()}};
    manifest.write(a.json_out);
  }
}

// sim

struct SimArgs {
  std::string model, dataset, segmentation, scores_out;
  bool no_compose = false;
};

void cmd_sim(const SimArgs& a) {
  const Model model = load_model(a.model);
  auto in = open_in(a.dataset);
  const auto dataset = read_similarity_dataset(in);
  std::optional<PostHocMap> map;
  if (!a.segmentation.empty()) {
    auto sin = open_in(a.segmentation);
    map = build_post_hoc_map(parse_segmentations(sin), model.factorization().factors);
  }
  const auto mode = a.no_compose ? OovMode::no_compose : OovMode::compose;
  const auto result = evaluate_similarity(model, dataset, map ? &*map : nullptr, mode);
  if (!a.scores_out.empty()) {
    auto out = open_out(a.scores_out);
    for (size_t i = 0; i < dataset.size(); ++i)
      out << dataset[i].first << '\t' << dataset[i].second << '\t' << format_real(dataset[i].rating) << '\t'
          << format_real(result.model_scores[i]) << '\n';
  }
  std::cout << "pairs\t" << dataset.size() << '\n'
            << "oov_words\t" << result.oov_count << '\n'
            << "zero_vector_pairs\t" << result.degenerate_pairs << '\n'
            << "rho\t" << (result.rho ? format_real(*result.rho) : std::string("undefined")) << '\n';
}

// score

void cmd_score(const std::string& model_path) {
  const Model model = load_model(model_path);
  const auto& vocab = model.vocab();
  const int n = model.config().order;
  NormalizerCache cache;
  std::string line;
  std::vector<WordId> context(static_cast<size_t>(n - 1));
  while (std::getline(std::cin, line)) {
    std::istringstream ss(line);
    std::fill(context.begin(), context.end(), kPadId);
    long double total = 0;
    std::string scores;
    for (std::string token; ss >> token;) {
      const WordId w = vocab.lookup(normalize_token(token));
      const Real lp = log_prob(model, context, w, &cache);
      total += lp;
      if (!scores.empty()) scores += ' ';
      scores += format_real(lp);
      if (!context.empty()) {
        context.erase(context.begin());
        context.push_back(w);
      }
    }
    std::cout << format_real(static_cast<double>(total)) << '\t' << scores << '\n';
  }
}

// export

struct ExportArgs {
  std::string model, table = "concat", out;
};

void cmd_export(const ExportArgs& a) {
  const Model model = load_model(a.model);
  Table table;
  const std::vector<std::string>* names = &model.vocab().types();
  const auto& params = model.params();
  if (a.table == "concat") {
    table = concatenated_table(model);
  } else if (a.table == "context") {
    table = model.context_table();
  } else if (a.table == "target") {
    table = model.target_table();
  } else if (a.table == "context-factors" || a.table == "target-factors") {
    const bool context = a.table == "context-factors";
    if (!(context ? model.config().context_additive : model.config().output_additive))
      throw ConfigError("this side of the model has no factor table");
    table = context ? params.context_factors : params.target_factors;
    names = &model.factorization().factors.factors();
  } else {
    throw ConfigError("unknown table '" + a.table + "'");
  }
  if (a.out.empty()) {
    write_vectors(std::cout, *names, table);
  } else {
    auto out = open_out(a.out);
    write_vectors(out, *names, table);
  }
}

// neighbors

void cmd_neighbors(const std::string& model_path, const std::string& word, const std::string& segmentation,
                   int k) {
  const Model model = load_model(model_path);
  std::optional<PostHocMap> map;
  if (!segmentation.empty()) {
    auto in = open_in(segmentation);
    map = build_post_hoc_map(parse_segmentations(in), model.factorization().factors);
  }
  const std::string w = normalize_token(word);
  bool oov = false;
  const Vector query = word_representation(model, w, map ? &*map : nullptr, OovMode::compose, &oov);
  std::optional<WordId> exclude;
  if (!oov) exclude = model.vocab().find(w);
  for (const auto& n : nearest_neighbors(concatenated_table(model), query, static_cast<size_t>(k), exclude))
    if (n.word != kPadId) std::cout << model.vocab().type(n.word) << '\t' << format_real(n.similarity) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Log-bilinear language models with additive factor representations"};
  app.require_subcommand(1);
  app.set_version_flag("--version", MLBL_VERSION);

  PreprocessArgs pre;
  auto* p = app.add_subcommand("preprocess", "Build vocabulary, factor vocabulary and word factorization");
  p->add_option("--input", pre.input, "Training text, one sentence per line")->required();
  p->add_option("--out", pre.out, "Output prefix for .vocab, .factors and .mu")->required();
  p->add_option("--kappa", pre.kappa, "Fraction of singleton types replaced by <unk>")->capture_default_str();
  p->add_option("--seed", pre.seed, "Seed for singleton selection")->capture_default_str();
  p->add_option("--segmentation", pre.segmentation, "Morphological segmentation file");
  p->add_flag("--cyrillic-filter", pre.cyrillic, "Map tokens that are not mostly Cyrillic to <unk>");

  ClusterArgs cl;
  auto* c = app.add_subcommand("cluster", "Partition the vocabulary into word classes");
  c->add_option("--vocab", cl.vocab)->required();
  c->add_option("--input", cl.input, "Training text (brown)");
  c->add_option("--method", cl.method, "brown, freq or file")->capture_default_str();
  c->add_option("--classes", cl.classes, "Number of classes (default: round(sqrt(|V|)))");
  c->add_option("--max-iters", cl.max_iters, "Exchange passes (brown)")->capture_default_str();
  c->add_option("--partition-in", cl.partition_in, "Existing partition file (file)");
  c->add_option("--out", cl.out)->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model");
  t->add_option("--config", tr.config, "key = value configuration file");
  t->add_option("--set", tr.overrides, "Override a setting, key=value");
  t->add_option("--train", tr.train);
  t->add_option("--dev", tr.dev, "Development text for early stopping");
  t->add_option("--vocab", tr.vocab);
  t->add_option("--mu", tr.mu, "Word factorization table (default: identity)");
  t->add_option("--partition", tr.partition);
  t->add_option("--out", tr.out, "Model container to write");
  t->add_option("--threads", tr.threads);
  t->add_flag("--dump-config", tr.dump_config, "Print the effective configuration and exit");

  PplArgs pp;
  auto* e = app.add_subcommand("ppl", "Perplexity of a test set");
  e->add_option("--model", pp.model)->required();
  e->add_option("--test", pp.test)->required();
  e->add_flag("--by-freq", pp.by_freq, "Break down by training frequency");
  e->add_option("--train-counts", pp.train_counts, "Text to count training frequencies from");
  e->add_option("--by-label", pp.labels, "Per-token label file shaped like the test set");
  e->add_option("--keep-labels", pp.keep_labels, "Comma-separated labels to report; others go to Rest");
  e->add_option("--json", pp.json_out, "Write the report as JSON lines");
  e->add_option("--threads", pp.threads)->capture_default_str();

  SimArgs si;
  auto* s = app.add_subcommand("sim", "Word similarity correlation");
  s->add_option("--model", si.model)->required();
  s->add_option("--dataset", si.dataset, "word1<TAB>word2<TAB>rating")->required();
  s->add_option("--segmentation", si.segmentation, "Segmentations used to compose OOV vectors");
  s->add_flag("--no-compose", si.no_compose, "Represent every OOV word by <unk>");
  s->add_option("--scores", si.scores_out, "Write per-pair model scores");

  std::string score_model;
  auto* sc = app.add_subcommand("score", "Per-token log-probabilities for sentences on stdin");
  sc->add_option("--model", score_model)->required();

  ExportArgs ex;
  auto* x = app.add_subcommand("export", "Write a vector table as text");
  x->add_option("--model", ex.model)->required();
  x->add_option("--table", ex.table, "concat, context, target, context-factors or target-factors")
      ->capture_default_str();
  x->add_option("--out", ex.out, "Output file (default: stdout)");

  std::string nn_model, nn_word, nn_seg;
  int nn_k = 10;
  auto* nn = app.add_subcommand("neighbors", "Nearest words by cosine similarity");
  nn->add_option("--model", nn_model)->required();
  nn->add_option("--word", nn_word)->required();
  nn->add_option("--segmentation", nn_seg, "Segmentations used to compose an OOV query");
  nn->add_option("-k", nn_k)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*p) cmd_preprocess(pre);
    else if (*c) cmd_cluster(cl);
    else if (*t) cmd_train(tr);
    else if (*e) cmd_ppl(pp);
    else if (*s) cmd_sim(si);
    else if (*sc) cmd_score(score_model);
    else if (*x) cmd_export(ex);
    else if (*nn) cmd_neighbors(nn_model, nn_word, nn_seg, nn_k);
  } catch (const ConfigError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kUsage;
  } catch (const DataError& err) {
    std::cerr << "data error: " << err.what() << '\n';
    return kData;
  } catch (const MismatchError& err) {
    std::cerr << "mismatch: " << err.what() << '\n';
    return kMismatch;
  } catch (const FormatError& err) {
    std::cerr << "bad model file: " << err.what() << '\n';
    return kFormat;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kInternal;
  }
  return kOk;
}
