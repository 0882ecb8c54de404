#include "mlbl/model_io.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace mlbl {

namespace {

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void u8(uint8_t v) { out_.put(static_cast<char>(v)); }
  void u32(uint32_t v) { le(v, 4); }
  void u64(uint64_t v) { le(v, 8); }
  void i64(int64_t v) { le(static_cast<uint64_t>(v), 8); }
  void f64(double v) { le(std::bit_cast<uint64_t>(v), 8); }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void reals(const Real* data, size_t n) {
    for (size_t i = 0; i < n; ++i) f64(data[i]);
  }

 private:
  void le(uint64_t v, int bytes) {
    char buf[8];
    for (int i = 0; i < bytes; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out_.write(buf, bytes);
  }
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  uint8_t u8() { return static_cast<uint8_t>(le(1)); }
  uint32_t u32() { return static_cast<uint32_t>(le(4)); }
  uint64_t u64() { return le(8); }
  int64_t i64() { return static_cast<int64_t>(le(8)); }
  double f64() { return std::bit_cast<double>(le(8)); }
  std::string str() {
    const uint32_t n = u32();
    if (n > (1u << 20)) throw FormatError("model container: implausible string length");
    std::string s(n, '\0');
    if (!in_.read(s.data(), n)) throw FormatError("model container is truncated");
    return s;
  }
  void reals(Real* data, size_t n) {
    for (size_t i = 0; i < n; ++i) data[i] = f64();
  }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  uint64_t le(int bytes) {
    unsigned char buf[8];
    if (!in_.read(reinterpret_cast<char*>(buf), bytes)) throw FormatError("model container is truncated");
    uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
    return v;
  }
  std::istream& in_;
};

void check_size(uint64_t n, uint64_t limit, const char* what) {
  if (n > limit) throw FormatError(std::string("model container: implausible ") + what);
}

}  // namespace

void save_model(const Model& model, std::ostream& out) {
  Writer w(out);
  const auto& cfg = model.config();
  const auto& vocab = model.vocab();
  const auto& fz = model.factorization();
  const auto& params = model.params();
  out.write(kModelMagic, 4);
  w.u32(kModelFormatVersion);
  w.u32(static_cast<uint32_t>(cfg.order));
  w.u32(static_cast<uint32_t>(cfg.dim));
  w.u8(cfg.context_additive);
  w.u8(cfg.output_additive);
  w.u8(cfg.class_based);
  w.u8(0);
  w.u64(vocab.size());
  w.u64(static_cast<uint64_t>(params.context_factors.rows()));
  w.u64(static_cast<uint64_t>(params.target_factors.rows()));
  w.u64(model.partition() ? model.partition()->num_classes() : 0);
  w.u64(fz.factors.size());
  w.f64(vocab.kappa());

  for (size_t i = 0; i < vocab.size(); ++i) {
    w.str(vocab.type(static_cast<WordId>(i)));
    w.i64(vocab.count(static_cast<WordId>(i)));
  }
  for (const auto& f : fz.factors.factors()) w.str(f);
  for (size_t i = 0; i < vocab.size(); ++i) {
    const auto mu = fz.words.mu(static_cast<WordId>(i));
    w.u32(static_cast<uint32_t>(mu.size()));
    for (FactorId f : mu) w.u32(static_cast<uint32_t>(f));
  }
  if (const auto* part = model.partition())
    for (size_t i = 0; i < vocab.size(); ++i) w.u32(static_cast<uint32_t>(part->class_of(static_cast<WordId>(i))));

  for (const auto& c : params.context_transforms) w.reals(c.data(), c.size());
  w.reals(params.context_factors.data(), params.context_factors.size());
  w.reals(params.target_factors.data(), params.target_factors.size());
  w.reals(params.word_bias.data(), params.word_bias.size());
  w.reals(params.class_vectors.data(), params.class_vectors.size());
  w.reals(params.class_bias.data(), params.class_bias.size());
  if (!out) throw DataError("failed to write model container");
}

Model load_model(std::istream& in) {
  Reader r(in);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kModelMagic, 4) != 0)
    throw FormatError("not a model container (bad magic)");
  const uint32_t version = r.u32();
  if (version != kModelFormatVersion)
    throw FormatError("unsupported model container version " + std::to_string(version));
  ModelConfig cfg;
  cfg.order = static_cast<int>(r.u32());
  cfg.dim = static_cast<int>(r.u32());
  cfg.context_additive = r.u8() != 0;
  cfg.output_additive = r.u8() != 0;
  cfg.class_based = r.u8() != 0;
  r.u8();
  if (cfg.order < 2 || cfg.order > 64 || cfg.dim < 1 || cfg.dim > (1 << 16))
    throw FormatError("model container: invalid configuration");
  const uint64_t num_words = r.u64(), fq = r.u64(), fr = r.u64(), num_classes = r.u64(), num_factors = r.u64();
  const double kappa = r.f64();
  check_size(num_words, 1ull << 31, "vocabulary size");
  check_size(num_factors, 1ull << 31, "factor count");
  check_size(num_classes, num_words, "class count");

  std::vector<std::pair<std::string, int64_t>> entries;
  int64_t unk_count = 0;
  for (uint64_t i = 0; i < num_words; ++i) {
    std::string type = r.str();
    const int64_t count = r.i64();
    if (i == kUnkId) {
      if (type != kUnkSymbol) throw FormatError("model container: bad UNK row");
      unk_count = count;
    } else if (i == kPadId) {
      if (type != kPadSymbol) throw FormatError("model container: bad PAD row");
    } else {
      entries.emplace_back(std::move(type), count);
    }
  }
  Vocabulary vocab;
  try {
    vocab = Vocabulary::from_counts(std::move(entries), unk_count, kappa);
  } catch (const DataError& e) {
    throw FormatError(std::string("model container: ") + e.what());
  }
  if (vocab.size() != num_words) throw FormatError("model container: vocabulary size mismatch");

  Factorization fz;
  for (uint64_t i = 0; i < num_factors; ++i) fz.factors.add(r.str());
  if (fz.factors.size() != num_factors) throw FormatError("model container: duplicate factors");
  std::vector<std::vector<FactorId>> mu(num_words);
  for (uint64_t i = 0; i < num_words; ++i) {
    const uint32_t k = r.u32();
    check_size(k, 1u << 16, "factorization length");
    for (uint32_t j = 0; j < k; ++j) mu[i].push_back(static_cast<FactorId>(r.u32()));
  }
  try {
    fz.words = WordFactorization(std::move(mu), num_factors);
  } catch (const Error& e) {
    throw FormatError(std::string("model container: ") + e.what());
  }

  std::optional<ClassPartition> partition;
  if (num_classes > 0) {
    std::vector<ClassId> class_of(num_words);
    for (uint64_t i = 0; i < num_words; ++i) class_of[i] = static_cast<ClassId>(r.u32());
    try {
      partition = ClassPartition(std::move(class_of));
    } catch (const Error& e) {
      throw FormatError(std::string("model container: ") + e.what());
    }
    if (partition->num_classes() != num_classes) throw FormatError("model container: class count mismatch");
  }
  if (cfg.class_based != (num_classes > 0)) throw FormatError("model container: class flag mismatch");

  Model model(cfg, std::move(vocab), std::move(fz), std::move(partition));
  auto& params = model.params();
  if (static_cast<uint64_t>(params.context_factors.rows()) != fq ||
      static_cast<uint64_t>(params.target_factors.rows()) != fr)
    throw FormatError("model container: table shapes disagree with the header");
  for (auto& block : params.blocks()) r.reals(block.data, block.size);
  if (!r.at_end()) throw FormatError("model container has trailing bytes");
  model.compile();
  return model;
}

void save_model(const Model& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  save_model(model, out);
}

Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model '" + path + "'");
  return load_model(in);
}

}  // namespace mlbl
