#include "nestor/trainer/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>

#include "nestor/error.h"

namespace nestor::trainer {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'N', 'E', 'S', 'T', 'O', 'R', 'C', 'K'};
constexpr std::uint32_t kF32 = 0;
constexpr std::uint32_t kF64 = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Reader {
 public:
  Reader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}

  template <typename T>
  T get() {
    T v{};
    read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  }

  std::string get_string(std::uint64_t limit) {
    const auto n = get<std::uint64_t>();
    if (n > limit) throw DataError(path_ + ": implausible string length " + std::to_string(n));
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }

  void read(char* dst, std::uint64_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::uint64_t>(in_.gcount()) != n) throw DataError(path_ + ": truncated checkpoint");
  }

 private:
  std::istream& in_;
  std::string path_;
};

}  // namespace

void save_checkpoint(const std::string& path, const predictor::NerModel& model, std::uint64_t step) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint '" + path + "'");
  const bool f32 = model.config().train.precision == "f32";
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, f32 ? kF32 : kF64);
  put<std::uint64_t>(out, step);
  put_string(out, config_to_json(model.config()).dump());
  put_string(out, model.vocab().to_json().dump());
  const auto params = model.params().all();
  put<std::uint64_t>(out, params.size());
  for (const auto* p : params) {
    put_string(out, p->name);
    put<std::uint64_t>(out, static_cast<std::uint64_t>(p->value.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(p->value.cols()));
    for (numerics::Index i = 0; i < p->value.size(); ++i) {
      const double v = p->value.data()[i];
      if (f32) {
        put<float>(out, static_cast<float>(v));
      } else {
        put<double>(out, v);
      }
    }
  }
  if (!out) throw DataError("failed writing checkpoint '" + path + "'");
}

LoadedCheckpoint load_checkpoint(const std::string& path, const std::string& contextual_path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  Reader r(in, path);
  char magic[8];
  r.read(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw CompatibilityError(path + ": not a checkpoint");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CompatibilityError(path + ": checkpoint version " + std::to_string(version) + ", expected " +
                             std::to_string(kCheckpointVersion));
  }
  const auto dtype = r.get<std::uint32_t>();
  if (dtype != kF32 && dtype != kF64) throw CompatibilityError(path + ": unknown dtype " + std::to_string(dtype));

  LoadedCheckpoint loaded;
  loaded.step = r.get<std::uint64_t>();
  constexpr std::uint64_t kMaxText = 1ULL << 30;
  RunConfig cfg;
  encoder::Vocabularies vocab;
  try {
    cfg = config_from_json(nlohmann::json::parse(r.get_string(kMaxText)));
    vocab = encoder::Vocabularies::from_json(nlohmann::json::parse(r.get_string(kMaxText)));
  } catch (const nlohmann::json::exception& e) {
    throw CompatibilityError(path + ": malformed header: " + e.what());
  } catch (const ConfigError& e) {
    throw CompatibilityError(path + ": stored configuration rejected: " + e.what());
  }

  std::shared_ptr<const encoder::ContextualStore> contextual;
  if (!contextual_path.empty()) cfg.embeddings.contextual_path = contextual_path;
  if (!cfg.embeddings.contextual_path.empty()) {
    contextual = std::make_shared<encoder::ContextualStore>(
        encoder::ContextualStore::load(cfg.embeddings.contextual_path));
  }
  loaded.model = std::make_unique<predictor::NerModel>(cfg, std::move(vocab), nullptr, contextual);

  auto& store = loaded.model->params();
  const auto count = r.get<std::uint64_t>();
  if (count != store.size()) {
    throw CompatibilityError(path + ": " + std::to_string(count) + " parameters stored, model has " +
                             std::to_string(store.size()));
  }
  for (std::uint64_t k = 0; k < count; ++k) {
    const std::string name = r.get_string(1 << 16);
    numerics::Param* p = store.find(name);
    if (p == nullptr) throw CompatibilityError(path + ": unknown parameter '" + name + "'");
    const auto rows = r.get<std::uint64_t>();
    const auto cols = r.get<std::uint64_t>();
    if (rows != static_cast<std::uint64_t>(p->value.rows()) || cols != static_cast<std::uint64_t>(p->value.cols())) {
      throw CompatibilityError(path + ": parameter '" + name + "' has shape [" + std::to_string(rows) + ", " +
                               std::to_string(cols) + "], model expects " + numerics::shape_string(p->value));
    }
    for (numerics::Index i = 0; i < p->value.size(); ++i) {
      p->value.data()[i] = dtype == kF32 ? static_cast<double>(r.get<float>()) : r.get<double>();
    }
  }
  return loaded;
}

}  // namespace nestor::trainer
