#include "vlsa/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "vlsa/array_io.hpp"
#include "vlsa/error.hpp"

namespace vlsa {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'V', 'L', 'C', 'K'};
constexpr std::uint8_t kFloat64 = 0;

struct Entry {
  std::string name;
  const Matrix* value;
};

std::vector<Entry> entries(const Checkpoint& ck) {
  std::vector<Entry> out;
  for (const auto& p : ck.model.params) out.push_back({p.name, &p.value});
  for (std::size_t i = 0; i < ck.model.params.size(); ++i)
    out.push_back({"adam.m/" + ck.model.params[i].name, &ck.adam.m[i]});
  for (std::size_t i = 0; i < ck.model.params.size(); ++i)
    out.push_back({"adam.v/" + ck.model.params[i].name, &ck.adam.v[i]});
  return out;
}

void write_f64s(std::ostream& out, const double* data, std::size_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
  } else {
    for (std::size_t i = 0; i < n; ++i) put_f64(out, data[i]);
  }
}

void read_f64s(std::istream& in, double* data, std::size_t n, const std::string& source) {
  if constexpr (std::endian::native == std::endian::little) {
    in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw IoError(source + ": truncated tensor payload");
  } else {
    for (std::size_t i = 0; i < n; ++i) data[i] = get_f64(in, source);
  }
}

}  // namespace

json checkpoint_config(const Checkpoint& ck) {
  return json{{"format", "vlsa-checkpoint"},
              {"data", to_json(ck.model.config.data)},
              {"model", to_json(ck.model.config)},
              {"train", to_json(ck.train)},
              {"step", ck.step},
              {"adam_step", ck.adam.step},
              {"rng", {{"key", ck.rng.key()}, {"counter", ck.rng.counter()}}}};
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  const std::string source = path.string();
  std::ostringstream out(std::ios::binary);
  out.write(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  const std::string doc = checkpoint_config(ck).dump();
  put_u64(out, doc.size());
  out.write(doc.data(), static_cast<std::streamsize>(doc.size()));
  const auto list = entries(ck);
  put_u32(out, static_cast<std::uint32_t>(list.size()));
  std::uint64_t offset = 0;
  for (const auto& e : list) {
    put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    out.put(static_cast<char>(kFloat64));
    put_u32(out, 2);
    put_u32(out, static_cast<std::uint32_t>(e.value->rows()));
    put_u32(out, static_cast<std::uint32_t>(e.value->cols()));
    put_u64(out, offset);
    offset += static_cast<std::uint64_t>(e.value->size()) * sizeof(double);
  }
  for (const auto& e : list) write_f64s(out, e.value->data(), static_cast<std::size_t>(e.value->size()));

  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError(source + ": cannot open for writing");
  const std::string bytes = out.str();
  file.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!file) throw IoError(source + ": write failed");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string source = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(source + ": cannot open checkpoint");
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) throw IoError(source + ": not a checkpoint file");
  const std::uint32_t version = get_u32(in, source);
  if (version != kCheckpointVersion)
    throw IoError(source + ": unsupported checkpoint version " + std::to_string(version));
  const std::uint64_t doc_size = get_u64(in, source);
  if (doc_size > (1u << 26)) throw IoError(source + ": config document too large");
  std::string doc(doc_size, '\0');
  if (!in.read(doc.data(), static_cast<std::streamsize>(doc_size))) throw IoError(source + ": truncated config");

  Checkpoint ck;
  try {
    const json cfg = json::parse(doc);
    if (cfg.at("format") != "vlsa-checkpoint") throw IoError(source + ": wrong format tag");
    const DataConfig data = data_config_from_json(cfg.at("data"), DataConfig{}, "data");
    const ModelConfig mc = model_config_from_json(cfg.at("model"), data, ModelConfig{});
    const TrainConfig tc = train_config_from_json(cfg.at("train"), TrainConfig{});
    ck = init_checkpoint(mc, tc);
    ck.step = cfg.at("step").get<std::int64_t>();
    ck.adam.step = cfg.at("adam_step").get<std::int64_t>();
    ck.rng = CounterRng(cfg.at("rng").at("key").get<std::uint64_t>(), cfg.at("rng").at("counter").get<std::uint64_t>());
  } catch (const json::exception& e) {
    throw IoError(source + ": malformed config document: " + e.what());
  } catch (const ValidationError& e) {
    throw IoError(source + ": invalid config document: " + e.what());
  }

  const std::uint32_t count = get_u32(in, source);
  struct Header {
    std::string name;
    std::uint32_t rows, cols;
    std::uint64_t offset;
  };
  std::vector<Header> headers;
  for (std::uint32_t i = 0; i < count; ++i) {
    Header h;
    const std::uint32_t len = get_u32(in, source);
    if (len > 4096) throw IoError(source + ": tensor name too long");
    h.name.resize(len);
    if (!in.read(h.name.data(), len)) throw IoError(source + ": truncated tensor table");
    const int dtype = in.get();
    if (dtype != kFloat64) throw IoError(source + ": tensor " + h.name + " has unsupported dtype");
    if (get_u32(in, source) != 2) throw IoError(source + ": tensor " + h.name + " must have rank 2");
    h.rows = get_u32(in, source);
    h.cols = get_u32(in, source);
    h.offset = get_u64(in, source);
    headers.push_back(std::move(h));
  }

  auto target = [&](const std::string& name) -> Matrix* {
    std::string base = name;
    Gradients* moments = nullptr;
    if (name.starts_with("adam.m/")) {
      moments = &ck.adam.m;
      base = name.substr(7);
    } else if (name.starts_with("adam.v/")) {
      moments = &ck.adam.v;
      base = name.substr(7);
    }
    if (!ck.model.params.contains(base)) return nullptr;
    const std::size_t id = ck.model.params.id(base);
    return moments ? &(*moments)[id] : &ck.model.params[id].value;
  };

  const auto payload_start = in.tellg();
  for (const auto& h : headers) {
    Matrix* m = target(h.name);
    if (!m) throw IoError(source + ": unexpected tensor " + h.name);
    if (m->rows() != h.rows || m->cols() != h.cols)
      throw IoError(source + ": tensor " + h.name + " has shape " + std::to_string(h.rows) + "x" +
                    std::to_string(h.cols) + ", expected " + std::to_string(m->rows()) + "x" +
                    std::to_string(m->cols()));
    in.seekg(payload_start + static_cast<std::streamoff>(h.offset));
    read_f64s(in, m->data(), static_cast<std::size_t>(m->size()), source);
  }
  const auto expected = entries(ck);
  if (headers.size() != expected.size()) throw IoError(source + ": tensor table is incomplete");
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (headers[i].name != expected[i].name) throw IoError(source + ": missing tensor " + expected[i].name);
  }
  return ck;
}

std::string checkpoint_id(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open checkpoint");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

}  // namespace vlsa
