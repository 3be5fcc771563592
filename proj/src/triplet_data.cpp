#include "vlsa/triplet_data.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "vlsa/array_io.hpp"
#include "vlsa/error.hpp"
#include "vlsa/rng.hpp"

namespace vlsa {

namespace fs = std::filesystem;
using nlohmann::json;

DataConfig DataConfig::desk() {
  DataConfig c;
  c.frames = 2;
  c.height = 32;
  c.width = 32;
  c.max_tokens = 8;
  c.vocab_size = 64;
  c.time_bins = 32;
  c.freq_bins = 32;
  return c;
}

std::size_t DataConfig::video_size() const {
  return static_cast<std::size_t>(frames) * 3 * static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
}

std::size_t DataConfig::spectrogram_size() const {
  return static_cast<std::size_t>(time_bins) * static_cast<std::size_t>(freq_bins);
}

void DataConfig::validate() const {
  const std::pair<const char*, int> fields[] = {{"frames", frames},         {"height", height},
                                                {"width", width},           {"max_tokens", max_tokens},
                                                {"vocab_size", vocab_size}, {"time_bins", time_bins},
                                                {"freq_bins", freq_bins}};
  for (const auto& [name, v] : fields) {
    if (v <= 0) throw ValidationError(std::string("data.") + name + " must be positive");
  }
  if (vocab_size <= Vocab::kUnk) throw ValidationError("data.vocab_size must exceed the reserved ids");
}

json to_json(const DataConfig& c) {
  return json{{"frames", c.frames},         {"height", c.height},         {"width", c.width},
              {"max_tokens", c.max_tokens}, {"vocab_size", c.vocab_size}, {"time_bins", c.time_bins},
              {"freq_bins", c.freq_bins}};
}

DataConfig data_config_from_json(const json& j, const DataConfig& base, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + " must be an object");
  DataConfig c = base;
  for (const auto& [key, value] : j.items()) {
    int* field = nullptr;
    if (key == "frames") field = &c.frames;
    else if (key == "height") field = &c.height;
    else if (key == "width") field = &c.width;
    else if (key == "max_tokens") field = &c.max_tokens;
    else if (key == "vocab_size") field = &c.vocab_size;
    else if (key == "time_bins") field = &c.time_bins;
    else if (key == "freq_bins") field = &c.freq_bins;
    else throw ValidationError(where + "." + key + ": unknown key");
    if (!value.is_number_integer()) throw ValidationError(where + "." + key + ": expected an integer");
    *field = value.get<int>();
  }
  c.validate();
  return c;
}

void check_triplet(const Triplet& t, const DataConfig& c) {
  if (t.video.size() != c.video_size()) throw ValidationError("triplet " + t.id + ": video size mismatch");
  if (t.spectrogram.size() != c.spectrogram_size())
    throw ValidationError("triplet " + t.id + ": spectrogram size mismatch");
  if (t.tokens.size() != static_cast<std::size_t>(c.max_tokens))
    throw ValidationError("triplet " + t.id + ": token count mismatch");
  bool seen_pad = false;
  for (auto id : t.tokens) {
    if (id < 0 || id >= c.vocab_size) throw ValidationError("triplet " + t.id + ": token id out of range");
    if (id == Vocab::kPad) {
      seen_pad = true;
    } else if (seen_pad) {
      throw ValidationError("triplet " + t.id + ": PAD tokens must be trailing");
    }
  }
}

int effective_length(const Triplet& t) {
  int n = 0;
  for (auto id : t.tokens) {
    if (id == Vocab::kPad) break;
    ++n;
  }
  return n;
}

// ---------------------------------------------------------------------------
// Vocabulary and tokenizer

namespace {
const std::array<std::string, 3> kReserved = {"[PAD]", "[MASK]", "[UNK]"};
}

Vocab::Vocab() {
  for (const auto& w : kReserved) {
    ids_.emplace(w, static_cast<std::int32_t>(words_.size()));
    words_.push_back(w);
  }
}

Vocab::Vocab(const std::vector<std::string>& words) : Vocab() {
  // `words` may or may not start with the reserved entries.
  std::size_t start = 0;
  if (words.size() >= kReserved.size() && std::equal(kReserved.begin(), kReserved.end(), words.begin()))
    start = kReserved.size();
  for (std::size_t i = start; i < words.size(); ++i) {
    if (lookup(words[i]) != kUnk) throw ValidationError("duplicate vocabulary entry '" + words[i] + "'");
    add(words[i]);
  }
}

std::int32_t Vocab::add(const std::string& word) {
  if (std::find(kReserved.begin(), kReserved.end(), word) != kReserved.end())
    throw ValidationError("reserved token '" + word + "' cannot be added");
  if (word.empty()) throw ValidationError("empty vocabulary entry");
  auto it = ids_.find(word);
  if (it != ids_.end()) return it->second;
  const auto id = static_cast<std::int32_t>(words_.size());
  ids_.emplace(word, id);
  words_.push_back(word);
  return id;
}

std::int32_t Vocab::lookup(std::string_view word) const {
  auto it = ids_.find(word);
  if (it == ids_.end() || it->second <= kUnk) return kUnk;
  return it->second;
}

const std::string& Vocab::word(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= words_.size()) throw std::out_of_range("token id out of range");
  return words_[static_cast<std::size_t>(id)];
}

std::vector<std::int32_t> tokenize(std::string_view text, const Vocab& vocab, int length) {
  std::vector<std::int32_t> ids;
  ids.reserve(static_cast<std::size_t>(std::max(length, 0)));
  std::string word;
  auto flush = [&] {
    if (!word.empty() && static_cast<int>(ids.size()) < length) ids.push_back(vocab.lookup(word));
    word.clear();
  };
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      flush();
    } else {
      word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  flush();
  ids.resize(static_cast<std::size_t>(std::max(length, 0)), Vocab::kPad);
  return ids;
}

std::string detokenize(const std::vector<std::int32_t>& ids, const Vocab& vocab) {
  std::string out;
  for (auto id : ids) {
    if (id == Vocab::kPad) continue;
    if (!out.empty()) out.push_back(' ');
    out += vocab.word(id);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic generator

const char* to_string(SyntheticMode m) { return m == SyntheticMode::correlated ? "correlated" : "random"; }

SyntheticMode parse_synthetic_mode(std::string_view s) {
  if (s == "correlated") return SyntheticMode::correlated;
  if (s == "random") return SyntheticMode::random;
  throw ValidationError("mode must be 'correlated' or 'random', got '" + std::string(s) + "'");
}

namespace {

constexpr int kLatentDims = 4;
constexpr int kLatentBins = 4;
constexpr int kClassWords = 3;
const std::array<const char*, 8> kDistractors = {"the", "a", "of", "and", "with", "sound", "scene", "clip"};

std::string class_word(int c, int j) { return "c" + std::to_string(c) + static_cast<char>('a' + j); }
std::string latent_word(int d, int bin) { return "z" + std::to_string(d) + "b" + std::to_string(bin); }

struct Latent {
  int cls = 0;
  std::array<double, kLatentDims> z{};
};

Latent draw_latent(CounterRng& rng, int k) {
  Latent l;
  l.cls = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
  for (auto& v : l.z) v = rng.uniform();
  return l;
}

void render_video(const Latent& l, int k, const DataConfig& c, CounterRng& noise, std::vector<float>& out) {
  out.resize(c.video_size());
  const double theta = std::numbers::pi * l.cls / k;
  const double cycles = 1.0 + (l.cls % 3);
  const double ct = std::cos(theta), st = std::sin(theta);
  std::size_t i = 0;
  for (int f = 0; f < c.frames; ++f) {
    for (int ch = 0; ch < 3; ++ch) {
      const double gain = 0.3 + 0.7 * l.z[static_cast<std::size_t>(ch)];
      for (int y = 0; y < c.height; ++y) {
        for (int x = 0; x < c.width; ++x) {
          const double u = (x * ct) / c.width + (y * st) / c.height;
          const double phase = 2.0 * std::numbers::pi * (cycles * u + l.z[3] + 0.1 * f);
          double v = 0.5 + 0.35 * gain * std::sin(phase) + 0.05 * noise.normal();
          out[i++] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
      }
    }
  }
}

void render_spectrogram(const Latent& l, int k, const DataConfig& c, CounterRng& noise, std::vector<float>& out) {
  out.resize(c.spectrogram_size());
  const double F = c.freq_bins;
  const double center1 = F * (0.1 + 0.6 * l.cls / k);
  const double center2 = F * (0.2 + 0.75 * std::fmod(0.37 * (l.cls + 1), 1.0));
  const double width = std::max(1.0, F / 16.0);
  const double amp1 = 0.5 + l.z[0];
  const double amp2 = 0.5 + l.z[1];
  const double rate = 1.0 + 3.0 * l.z[2];
  std::size_t i = 0;
  for (int t = 0; t < c.time_bins; ++t) {
    const double mod = 1.0 + 0.5 * std::sin(2.0 * std::numbers::pi * (rate * t / c.time_bins + l.z[3]));
    for (int f = 0; f < c.freq_bins; ++f) {
      const double b1 = std::exp(-0.5 * std::pow((f - center1) / width, 2));
      const double b2 = std::exp(-0.5 * std::pow((f - center2) / width, 2));
      const double v = 0.1 + amp1 * b1 * mod + amp2 * b2 * (2.0 - mod) + 0.05 * noise.normal();
      out[i++] = static_cast<float>(v);
    }
  }
}

std::string render_caption(const Latent& l, int max_tokens, CounterRng& rng) {
  std::vector<std::string> words;
  words.push_back(class_word(l.cls, static_cast<int>(rng.below(kClassWords))));
  for (int d = 0; d < kLatentDims; ++d) {
    const int bin = std::min(kLatentBins - 1, static_cast<int>(l.z[static_cast<std::size_t>(d)] * kLatentBins));
    words.push_back(latent_word(d, bin));
  }
  const int spare = std::max(0, max_tokens - static_cast<int>(words.size()));
  const int distractors = static_cast<int>(rng.below(static_cast<std::uint64_t>(std::min(spare, 3) + 1)));
  for (int i = 0; i < distractors; ++i) words.push_back(kDistractors[rng.below(kDistractors.size())]);
  rng.shuffle(std::span<std::string>(words));
  std::string text;
  for (const auto& w : words) {
    if (!text.empty()) text.push_back(' ');
    text += w;
  }
  return text;
}

std::string sample_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "s%06d", index);
  return buf;
}

}  // namespace

Vocab synthetic_vocab(int k_classes) {
  Vocab v;
  for (int c = 0; c < k_classes; ++c)
    for (int j = 0; j < kClassWords; ++j) v.add(class_word(c, j));
  for (int d = 0; d < kLatentDims; ++d)
    for (int b = 0; b < kLatentBins; ++b) v.add(latent_word(d, b));
  for (const char* w : kDistractors) v.add(w);
  return v;
}

Dataset generate_synthetic(int n, int k_classes, std::uint64_t seed, SyntheticMode mode, const DataConfig& config,
                           int first_index) {
  if (n < 1) throw ValidationError("synthetic dataset needs n >= 1");
  if (k_classes < 2) throw ValidationError("synthetic dataset needs at least 2 classes");
  config.validate();
  const std::size_t needed = 3 + static_cast<std::size_t>(k_classes) * kClassWords + kLatentDims * kLatentBins +
                             kDistractors.size();
  if (needed > static_cast<std::size_t>(config.vocab_size))
    throw ValidationError(std::to_string(k_classes) + " classes need " + std::to_string(needed) +
                          " vocabulary slots but vocab_size is " + std::to_string(config.vocab_size));

  Dataset ds;
  ds.config = config;
  ds.vocab = synthetic_vocab(k_classes);
  ds.info = json{{"generator", "synthetic"},
                 {"mode", to_string(mode)},
                 {"classes", k_classes},
                 {"seed", seed},
                 {"first_index", first_index}};
  ds.samples.resize(static_cast<std::size_t>(n));
  const CounterRng root(seed);
  for (int i = 0; i < n; ++i) {
    const int index = first_index + i;
    CounterRng rng = root.split(static_cast<std::uint64_t>(index));
    Latent video_latent = draw_latent(rng, k_classes);
    Latent text_latent = video_latent;
    Latent audio_latent = video_latent;
    if (mode == SyntheticMode::random) {
      text_latent = draw_latent(rng, k_classes);
      audio_latent = draw_latent(rng, k_classes);
    }
    Triplet& t = ds.samples[static_cast<std::size_t>(i)];
    t.id = sample_id(index);
    if (mode == SyntheticMode::correlated) t.latent_class = video_latent.cls;
    CounterRng video_noise = rng.split(1);
    CounterRng audio_noise = rng.split(2);
    CounterRng text_rng = rng.split(3);
    render_video(video_latent, k_classes, config, video_noise, t.video);
    render_spectrogram(audio_latent, k_classes, config, audio_noise, t.spectrogram);
    t.tokens = tokenize(render_caption(text_latent, config.max_tokens, text_rng), ds.vocab, config.max_tokens);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Directory I/O

namespace {

constexpr int kManifestVersion = 1;

std::string sample_file(const Triplet& t) { return t.id + ".bin"; }

std::vector<std::uint32_t> dims_of(std::initializer_list<int> d) {
  std::vector<std::uint32_t> out;
  for (int v : d) out.push_back(static_cast<std::uint32_t>(v));
  return out;
}

void expect_block(const ArrayBlock& b, Modality m, DType dt, const std::vector<std::uint32_t>& dims,
                  const std::string& source) {
  if (b.modality != m)
    throw IoError(source + ": expected " + std::string(modality_name(m)) + " block, found " + modality_name(b.modality));
  if (b.dtype != dt) throw IoError(source + ": unexpected dtype in " + modality_name(m) + " block");
  if (b.dims != dims) {
    std::ostringstream msg;
    msg << source << ": shape mismatch in " << modality_name(m) << " block: manifest expects [";
    for (std::size_t i = 0; i < dims.size(); ++i) msg << (i ? "," : "") << dims[i];
    msg << "], file holds [";
    for (std::size_t i = 0; i < b.dims.size(); ++i) msg << (i ? "," : "") << b.dims[i];
    msg << "]";
    throw IoError(msg.str());
  }
}

}  // namespace

void save_dataset(const Dataset& dataset, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(dir.string() + ": cannot create directory: " + ec.message());
  const DataConfig& c = dataset.config;
  json samples = json::array();
  for (const auto& t : dataset.samples) {
    check_triplet(t, c);
    const fs::path path = dir / sample_file(t);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    write_block(out, Modality::video, dims_of({c.frames, 3, c.height, c.width}), std::span<const float>(t.video));
    write_block(out, Modality::text, dims_of({c.max_tokens}), std::span<const std::int32_t>(t.tokens));
    write_block(out, Modality::audio, dims_of({c.time_bins, c.freq_bins}), std::span<const float>(t.spectrogram));
    if (!out) throw IoError(path.string() + ": write failed");
    json entry{{"id", t.id}, {"file", sample_file(t)}};
    if (t.latent_class) entry["latent_class"] = *t.latent_class;
    samples.push_back(entry);
  }
  json manifest{{"format", "vlsa-dataset"},
                {"version", kManifestVersion},
                {"config", to_json(c)},
                {"count", dataset.samples.size()},
                {"vocab", dataset.vocab.words()},
                {"info", dataset.info},
                {"samples", samples}};
  const fs::path mpath = dir / "manifest.json";
  std::ofstream out(mpath, std::ios::trunc);
  if (!out) throw IoError(mpath.string() + ": cannot open for writing");
  out << manifest.dump(2) << "\n";
  if (!out) throw IoError(mpath.string() + ": write failed");
}

Dataset load_dataset(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  std::ifstream in(mpath);
  if (!in) throw IoError(mpath.string() + ": cannot open manifest");
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw IoError(mpath.string() + ": corrupt manifest: " + e.what());
  }
  Dataset ds;
  try {
    if (manifest.at("format") != "vlsa-dataset") throw IoError(mpath.string() + ": not a dataset manifest");
    if (manifest.at("version").get<int>() != kManifestVersion)
      throw IoError(mpath.string() + ": unsupported manifest version");
    ds.config = data_config_from_json(manifest.at("config"), DataConfig{}, "config");
    ds.vocab = Vocab(manifest.at("vocab").get<std::vector<std::string>>());
    if (manifest.contains("info")) ds.info = manifest["info"];
    const auto& entries = manifest.at("samples");
    if (entries.size() != manifest.at("count").get<std::size_t>())
      throw IoError(mpath.string() + ": sample count does not match sample list");
    if (ds.vocab.size() > static_cast<std::size_t>(ds.config.vocab_size))
      throw IoError(mpath.string() + ": vocabulary larger than config.vocab_size");
    const DataConfig& c = ds.config;
    for (const auto& e : entries) {
      Triplet t;
      t.id = e.at("id").get<std::string>();
      if (e.contains("latent_class")) t.latent_class = e["latent_class"].get<int>();
      const fs::path path = dir / e.at("file").get<std::string>();
      std::ifstream bin(path, std::ios::binary);
      if (!bin) throw IoError(path.string() + ": missing or unreadable sample file");
      const std::string src = path.string();
      ArrayBlock video = read_block(bin, src);
      expect_block(video, Modality::video, DType::f32, dims_of({c.frames, 3, c.height, c.width}), src);
      ArrayBlock text = read_block(bin, src);
      expect_block(text, Modality::text, DType::i32, dims_of({c.max_tokens}), src);
      ArrayBlock audio = read_block(bin, src);
      expect_block(audio, Modality::audio, DType::f32, dims_of({c.time_bins, c.freq_bins}), src);
      t.video = std::move(video.f32);
      t.tokens = std::move(text.i32);
      t.spectrogram = std::move(audio.f32);
      try {
        check_triplet(t, c);
      } catch (const ValidationError& err) {
        throw IoError(src + ": " + err.what());
      }
      ds.samples.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    throw IoError(mpath.string() + ": corrupt manifest: " + e.what());
  } catch (const ValidationError& e) {
    throw IoError(mpath.string() + ": " + e.what());
  }
  return ds;
}

}  // namespace vlsa
