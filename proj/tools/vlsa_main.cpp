// vlsa: dataset generation, pretraining, retrieval evaluation, embedding
// export, gradient checks and ablation runs.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "vlsa/audio_frontend.hpp"
#include "vlsa/checkpoint.hpp"
#include "vlsa/error.hpp"
#include "vlsa/retrieval_eval.hpp"
#include "vlsa/run_config.hpp"
#include "vlsa/trainer.hpp"
#include "vlsa/triplet_data.hpp"

using namespace vlsa;
using nlohmann::json;

namespace {

void echo(const std::string& command, const json& config) {
  std::cout << json{{"command", command}, {"resolved_config", config}}.dump() << '\n';
}

std::vector<int> parse_ks(const std::string& s) {
  std::vector<int> ks;
  std::stringstream in(s);
  std::string part;
  while (std::getline(in, part, ',')) {
    try {
      std::size_t used = 0;
      const int k = std::stoi(part, &used);
      if (used != part.size() || k < 1) throw std::invalid_argument(part);
      ks.push_back(k);
    } catch (const std::logic_error&) {
      throw ValidationError("--ks: '" + part + "' is not a positive integer");
    }
  }
  if (ks.empty()) throw ValidationError("--ks: empty list");
  return ks;
}

bool parse_switch(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw ValidationError("--ablate " + key + ": expected on or off, got '" + v + "'");
}

// Comma-separated key=value list: lpmm, gam, vtm, matching (on/off),
// joint and shared (modality sets).
void apply_ablation(RunConfig& c, const std::string& flags) {
  std::stringstream in(flags);
  std::string item;
  bool gam_given = false;
  while (std::getline(in, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ValidationError("--ablate: expected key=value, got '" + item + "'");
    const std::string key = item.substr(0, eq), value = item.substr(eq + 1);
    if (key == "lpmm") c.train.lpmm = parse_switch(key, value);
    else if (key == "gam") {
      c.train.gam = parse_switch(key, value);
      gam_given = true;
    } else if (key == "vtm") {
      c.train.vtm = parse_switch(key, value);
      if (c.train.vtm && !gam_given) c.train.gam = false;
    } else if (key == "matching") c.train.matching = parse_switch(key, value);
    else if (key == "joint") c.train.joint = c.eval.joint = ModalitySet::parse(value);
    else if (key == "shared") c.model.decoder.shared = ModalitySet::parse(value);
    else throw ValidationError("--ablate: unknown key '" + key + "'; valid: lpmm, gam, vtm, matching, joint, shared");
  }
  c.train.validate();
  c.model.validate();
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path + ": cannot open for writing");
  return out;
}

RunConfig config_or_preset(const std::string& file, const std::string& preset) {
  return file.empty() ? preset_run_config(preset) : load_run_config(file);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Video-language pretraining with synchronized audio"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic triplet dataset");
  std::string gen_out, gen_mode = "correlated", gen_preset = "desk", gen_config;
  int gen_num = 0, gen_classes = 4;
  std::uint64_t gen_seed = 0;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--num", gen_num, "Number of triplets")->required()->check(CLI::PositiveNumber);
  gen->add_option("--classes", gen_classes, "Latent classes")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "Generator seed");
  gen->add_option("--mode", gen_mode, "correlated or random")->check(CLI::IsMember({"correlated", "random"}));
  gen->add_option("--preset", gen_preset, "Shape preset: desk, tiny, paper");
  gen->add_option("--config", gen_config, "Configuration document; its data section sets the shapes");

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "Pretrain and write a checkpoint");
  std::string pre_config, pre_data, pre_out, pre_ablate, pre_log, pre_preset = "desk";
  int pre_threads = 0;
  pre->add_option("--config", pre_config, "Configuration document");
  pre->add_option("--preset", pre_preset, "Preset used when no --config is given");
  pre->add_option("--data", pre_data, "Dataset directory")->required();
  pre->add_option("--out", pre_out, "Checkpoint path")->required();
  pre->add_option("--ablate", pre_ablate, "e.g. gam=off,lpmm=on,joint=vt,shared=va");
  pre->add_option("--log", pre_log, "Training log (JSON lines); default <out>.log.jsonl");
  pre->add_option("--threads", pre_threads, "Worker threads (overrides train.threads)")->check(CLI::PositiveNumber);

  // eval
  auto* ev = app.add_subcommand("eval", "Retrieval recall of a checkpoint");
  std::string ev_ckpt, ev_data, ev_direction, ev_ks, ev_out, ev_absent, ev_joint;
  int ev_threads = 1;
  ev->add_option("--ckpt", ev_ckpt, "Checkpoint")->required();
  ev->add_option("--data", ev_data, "Dataset directory")->required();
  ev->add_option("--direction", ev_direction, "t2v|v2t|t2a|a2t|a2v|v2a")->required();
  ev->add_option("--ks", ev_ks, "Comma-separated ranks; default by direction");
  ev->add_option("--absent", ev_absent, "joint or zero (modalities outside the pair)");
  ev->add_option("--joint", ev_joint, "Encoder attention groups, e.g. vta or none");
  ev->add_option("--out", ev_out, "Also write the report here");
  ev->add_option("--threads", ev_threads, "Worker threads")->check(CLI::PositiveNumber);

  // embed
  auto* em = app.add_subcommand("embed", "Export pooled embeddings");
  std::string em_ckpt, em_data, em_out;
  int em_threads = 1;
  em->add_option("--ckpt", em_ckpt, "Checkpoint")->required();
  em->add_option("--data", em_data, "Dataset directory")->required();
  em->add_option("--out", em_out, "Output text file")->required();
  em->add_option("--threads", em_threads, "Worker threads")->check(CLI::PositiveNumber);

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  std::string gc_config;
  std::uint64_t gc_seed = 0;
  int gc_max_entries = 0;
  double gc_threshold = 1e-4;
  gc->add_option("--config", gc_config, "Configuration document (default: tiny preset)");
  gc->add_option("--seed", gc_seed, "Seed for parameters and data");
  gc->add_option("--max-entries", gc_max_entries, "Entries sampled per tensor; 0 checks all");
  gc->add_option("--threshold", gc_threshold, "Failure threshold on the max relative error");

  // ablate
  auto* ab = app.add_subcommand("ablate", "Train and evaluate several objective variants");
  std::string ab_config, ab_train, ab_test, ab_variants = "neither,gam,full", ab_out, ab_preset = "desk";
  int ab_threads = 0;
  ab->add_option("--config", ab_config, "Configuration document");
  ab->add_option("--preset", ab_preset, "Preset used when no --config is given");
  ab->add_option("--train", ab_train, "Training dataset directory")->required();
  ab->add_option("--test", ab_test, "Evaluation dataset directory")->required();
  ab->add_option("--variants", ab_variants, "neither, lpmm, gam, full, vtm, lpmm+vtm, joint=<set>, shared=<set>");
  ab->add_option("--out", ab_out, "Write rows as JSON lines");
  ab->add_option("--threads", ab_threads, "Worker threads")->check(CLI::PositiveNumber);

  // spectrogram
  auto* sp = app.add_subcommand("spectrogram", "Log-frequency spectrogram of a raw float32 waveform");
  std::string sp_in, sp_out;
  double sp_rate = 0;
  sp->add_option("--in", sp_in, "Headerless little-endian float32 samples")->required();
  sp->add_option("--rate", sp_rate, "Sample rate of the input")->required()->check(CLI::PositiveNumber);
  sp->add_option("--out", sp_out, "Output array block")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) {
      RunConfig c = gen_config.empty() ? preset_run_config(gen_preset) : load_run_config(gen_config);
      const SyntheticMode mode = parse_synthetic_mode(gen_mode);
      echo("gen-data", json{{"out", gen_out},
                            {"num", gen_num},
                            {"classes", gen_classes},
                            {"seed", gen_seed},
                            {"mode", gen_mode},
                            {"data", to_json(c.model.data)}});
      const Dataset ds = generate_synthetic(gen_num, gen_classes, gen_seed, mode, c.model.data);
      save_dataset(ds, gen_out);
      std::cout << "wrote " << ds.samples.size() << " samples; manifest "
                << (std::filesystem::path(gen_out) / "manifest.json").string() << '\n';
    } else if (*pre) {
      RunConfig c = config_or_preset(pre_config, pre_preset);
      if (!pre_ablate.empty()) apply_ablation(c, pre_ablate);
      if (pre_threads > 0) c.train.threads = pre_threads;
      const std::string log_path = pre_log.empty() ? pre_out + ".log.jsonl" : pre_log;
      echo("pretrain", to_json(c));
      const Dataset data = load_dataset(pre_data);
      std::ofstream log = open_output(log_path);
      const Checkpoint ck = pretrain(data, c.model, c.train, [&](const StepRecord& r) {
        log << to_json(r).dump() << '\n';
        log.flush();
      });
      save_checkpoint(ck, pre_out);
      std::cout << json{{"checkpoint", pre_out}, {"checkpoint_id", checkpoint_id(pre_out)}, {"steps", ck.step},
                        {"log", log_path}}
                       .dump()
                << '\n';
    } else if (*ev) {
      const Direction direction = parse_direction(ev_direction);
      const std::vector<int> ks = ev_ks.empty() ? default_ks(direction) : parse_ks(ev_ks);
      const Checkpoint ck = load_checkpoint(ev_ckpt);
      EvalConfig ec;
      ec.joint = ck.train.joint;
      if (!ev_absent.empty()) ec.absent = parse_absent_modality(ev_absent);
      if (!ev_joint.empty()) ec.joint = ModalitySet::parse(ev_joint);
      const std::string id = checkpoint_id(ev_ckpt);
      echo("eval", json{{"ckpt", ev_ckpt},
                        {"checkpoint_id", id},
                        {"data", ev_data},
                        {"direction", to_string(direction)},
                        {"ks", ks},
                        {"absent_modality", to_string(ec.absent)},
                        {"joint_encoder_modalities", ec.joint.str()},
                        {"threads", ev_threads}});
      const Dataset data = load_dataset(ev_data);
      const RetrievalReport r = evaluate(ck.model, data, direction, ks, eval_options(ec, ev_threads));
      const std::string line = to_json(r, id, ck.train.seed).dump();
      std::cout << line << '\n';
      if (!ev_out.empty()) open_output(ev_out) << line << '\n';
    } else if (*em) {
      const Checkpoint ck = load_checkpoint(em_ckpt);
      echo("embed", json{{"ckpt", em_ckpt},
                         {"checkpoint_id", checkpoint_id(em_ckpt)},
                         {"data", em_data},
                         {"out", em_out},
                         {"joint_encoder_modalities", ck.train.joint.str()},
                         {"threads", em_threads}});
      const Dataset data = load_dataset(em_data);
      EvalOptions o;
      o.joint = ck.train.joint;
      o.threads = em_threads;
      const EmbeddingTable t = embed_dataset(ck.model, data, o);
      std::ofstream out = open_output(em_out);
      out << t.video.cols() << ' ' << 3 * t.ids.size() << '\n';
      char buf[32];
      for (std::size_t i = 0; i < t.ids.size(); ++i) {
        for (auto [m, name] : {std::pair{ModalityKind::video, "video"}, std::pair{ModalityKind::text, "text"},
                               std::pair{ModalityKind::audio, "audio"}}) {
          out << t.ids[i] << ' ' << name;
          const Matrix& rows = t.of(m);
          for (Eigen::Index j = 0; j < rows.cols(); ++j) {
            std::snprintf(buf, sizeof buf, " %.17g", rows(static_cast<Eigen::Index>(i), j));
            out << buf;
          }
          out << '\n';
        }
      }
      if (!out) throw IoError(em_out + ": write failed");
      std::cout << "wrote " << 3 * t.ids.size() << " rows to " << em_out << '\n';
    } else if (*gc) {
      const RunConfig c = config_or_preset(gc_config, "tiny");
      GradcheckOptions o;
      o.max_entries = gc_max_entries;
      json cfg = to_json(c);
      cfg["gradcheck"] = json{{"seed", gc_seed}, {"h", o.h}, {"max_entries", o.max_entries},
                              {"batch", o.batch}, {"threshold", gc_threshold}};
      echo("gradcheck", cfg);
      const GradcheckResult r = gradcheck(c.model, c.train, gc_seed, o);
      const bool ok = r.max_rel_error < gc_threshold;
      std::cout << json{{"max_rel_error", r.max_rel_error},
                        {"worst_param", r.worst_param},
                        {"worst_index", r.worst_index},
                        {"analytic", r.analytic},
                        {"numeric", r.numeric},
                        {"checked", r.checked},
                        {"pass", ok}}
                       .dump()
                << '\n';
      return ok ? 0 : 1;
    } else if (*ab) {
      RunConfig c = config_or_preset(ab_config, ab_preset);
      if (ab_threads > 0) c.train.threads = ab_threads;
      std::vector<AblationVariant> variants;
      std::stringstream in(ab_variants);
      std::string item;
      while (std::getline(in, item, ',')) variants.push_back(parse_ablation_variant(item));
      json cfg = to_json(c);
      cfg["variants"] = ab_variants;
      echo("ablate", cfg);
      const Dataset train = load_dataset(ab_train);
      const Dataset test = load_dataset(ab_test);
      const auto rows = run_ablation(train, test, c.model, c.train, variants, eval_options(c.eval, c.train.threads));
      std::cout << ablation_table(rows);
      if (!ab_out.empty()) {
        std::ofstream out = open_output(ab_out);
        for (const auto& r : rows) {
          out << json{{"variant", r.variant.name},
                      {"t2v", to_json(r.t2v, "", c.train.seed)},
                      {"t2a", to_json(r.t2a, "", c.train.seed)}}
                     .dump()
              << '\n';
        }
      }
    } else if (*sp) {
      echo("spectrogram", json{{"in", sp_in}, {"rate", sp_rate}, {"out", sp_out}});
      const audio::Spectrogram s = audio::waveform_to_spectrogram(audio::load_waveform(sp_in, sp_rate));
      audio::save_spectrogram(sp_out, s);
      std::cout << json{{"frames", s.values.rows()}, {"bins", s.values.cols()}, {"degenerate", s.degenerate}}.dump()
                << '\n';
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
