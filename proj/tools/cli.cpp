#include "cli.hpp"

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "exerclass/errors.hpp"
#include "exerclass/evaluation.hpp"
#include "exerclass/landmarks.hpp"
#include "exerclass/model.hpp"
#include "exerclass/server.hpp"
#include "exerclass/synthgen.hpp"
#include "exerclass/training.hpp"

namespace exerclass::cli {
namespace {

/// Bad flags, unreadable inputs or contradictory settings.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

bool quiet() {
  const char* level = std::getenv("EXERCLASS_LOG_LEVEL");
  return level && std::string(level) == "quiet";
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot write '" + path + "'");
  out << text;
}

LandmarkDataset load_dataset(const std::string& path) {
  try {
    return load_landmark_file(path);
  } catch (const ParseError& e) {
    throw UsageError(path + ": " + e.what());
  }
}

LoadedModel load_model_file(const std::string& path) {
  try {
    return load_model(path);
  } catch (const ModelFormatError& e) {
    throw UsageError(path + ": " + e.what());
  }
}

std::vector<PoseSequence> pad_clips(const LandmarkDataset& data, int max_seq_len,
                                    std::vector<std::string>* ids = nullptr) {
  std::vector<PoseSequence> out;
  out.reserve(data.clips.size());
  for (const auto& clip : data.clips) {
    out.push_back(pad_or_truncate(clip.frames, max_seq_len, clip.label));
    if (ids) ids->push_back(clip.sequence_id);
  }
  return out;
}

struct GenerateArgs {
  std::string out;
  SynthSpec spec;
  int per_class = -1;
};

struct TrainArgs {
  std::string data;
  std::string model_out;
  std::string history_out;
  ModelConfig model;
  TrainConfig train;
  bool no_shuffle = false;
};

struct EvalArgs {
  std::string data;
  std::string model;
  std::string split = "val";
  double val_fraction = TrainConfig{}.val_fraction;
  std::uint64_t seed = TrainConfig{}.seed;
  std::string report_json;
  std::string report_table;
  bool shuffled_frames = false;
};

struct PredictArgs {
  std::string data;
  std::string model;
  std::string out;
};

struct ServeArgs {
  std::string listen = "127.0.0.1:8765";
  std::string model;
  int window = kDefaultWindowSize;
  int max_seq_len = 0;
  std::string log;
};

int do_generate(GenerateArgs& a, std::ostream& out) {
  if (a.per_class >= 0) a.spec.counts.assign(4, a.per_class);
  try {
    a.spec.validate();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  const auto data = generate(a.spec);
  save_landmark_file(data, a.out);
  out << "wrote " << data.clips.size() << " sequences to " << a.out << "\n";
  return kExitOk;
}

int do_train(TrainArgs& a, std::ostream& out) {
  a.train.shuffle_each_epoch = !a.no_shuffle;
  try {
    a.model.validate();
    a.train.validate();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  const auto data = load_dataset(a.data);
  if (data.registry.size() != static_cast<std::size_t>(a.model.num_classes)) {
    throw UsageError("dataset registry has " + std::to_string(data.registry.size()) +
                     " classes but --num-classes is " + std::to_string(a.model.num_classes));
  }
  const auto sequences = pad_clips(data, a.model.max_seq_len);
  const bool verbose = !quiet();
  TrainResult result;
  try {
    result = train(sequences, a.model, a.train, [&](const EpochRecord& r) {
      if (!verbose) return;
      out << "epoch " << r.epoch << "/" << a.train.epochs << "  loss " << r.train_loss << "  acc "
          << r.train_acc;
      if (r.val_acc) out << "  val_loss " << *r.val_loss << "  val_acc " << *r.val_acc;
      out << std::endl;
    });
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  save_model(result.params, a.model, data.registry, a.model_out);
  if (!a.history_out.empty()) write_text(a.history_out, format_history(result.history));
  const auto& last = result.history.epochs.back();
  out << "saved model to " << a.model_out << " (" << param_count(a.model) << " parameters)\n";
  if (last.val_acc) out << "final val_acc " << *last.val_acc << "\n";
  return kExitOk;
}

int do_eval(const EvalArgs& a, std::ostream& out) {
  const auto model = load_model_file(a.model);
  const auto data = load_dataset(a.data);
  if (!(data.registry == model.registry)) throw UsageError("dataset and model class registries differ");
  auto sequences = pad_clips(data, model.config.max_seq_len);
  for (const auto& s : sequences) {
    if (!s.label) throw UsageError("eval requires every sequence to be labeled");
  }

  std::vector<PoseSequence> chosen;
  if (a.split == "all") {
    chosen = sequences;
  } else {
    std::vector<int> labels;
    for (const auto& s : sequences) labels.push_back(*s.label);
    const auto split = stratified_split(labels, model.config.num_classes, a.val_fraction,
                                        derive_seed(a.seed, static_cast<std::uint64_t>(SeedStream::Split)));
    for (auto i : (a.split == "val" ? split.val : split.train)) chosen.push_back(sequences[i]);
  }
  if (chosen.empty()) throw UsageError("split '" + a.split + "' is empty");

  std::string name = a.split;
  if (a.shuffled_frames) {
    Rng rng(derive_seed(a.seed, 99));
    for (auto& s : chosen) s = shuffle_frames(s, rng);
    name += "-shuffled";
  }
  const auto report = evaluate(model.params, model.config, chosen, model.registry, name);
  const auto table = render_report(report, ReportFormat::Table);
  out << table;
  if (!a.report_json.empty()) write_text(a.report_json, render_report(report, ReportFormat::Json));
  if (!a.report_table.empty()) write_text(a.report_table, table);
  return kExitOk;
}

int do_predict(const PredictArgs& a, std::ostream& out) {
  const auto model = load_model_file(a.model);
  const auto data = load_dataset(a.data);
  std::vector<std::string> ids;
  const auto sequences = pad_clips(data, model.config.max_seq_len, &ids);
  std::string lines;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const auto result = classify(sequences[i], model.params, model.config);
    nlohmann::ordered_json j;
    j["sequence_id"] = ids[i];
    j["label"] = model.registry.name(static_cast<std::size_t>(result.probabilities.argmax));
    nlohmann::ordered_json probs;
    for (std::size_t c = 0; c < result.probabilities.probs.size(); ++c) {
      probs[model.registry.name(c)] = result.probabilities.probs[c];
    }
    j["probs"] = probs;
    lines += j.dump() + "\n";
  }
  if (a.out.empty()) {
    out << lines;
  } else {
    write_text(a.out, lines);
    out << "wrote " << sequences.size() << " predictions to " << a.out << "\n";
  }
  return kExitOk;
}

int do_serve(const ServeArgs& a, std::ostream& out) {
  const auto colon = a.listen.rfind(':');
  if (colon == std::string::npos) throw UsageError("--listen expects <addr:port>");
  ServerOptions options;
  options.address = a.listen.substr(0, colon);
  try {
    const int port = std::stoi(a.listen.substr(colon + 1));
    if (port < 0 || port > 65535) throw std::out_of_range("port");
    options.port = static_cast<unsigned short>(port);
  } catch (const std::exception&) {
    throw UsageError("--listen has an invalid port");
  }
  options.window_size = a.window;
  options.log_path = a.log;

  auto model = std::make_shared<const LoadedModel>(load_model_file(a.model));
  if (a.max_seq_len != 0 && a.max_seq_len != model->config.max_seq_len) {
    throw UsageError("--max-seq-len " + std::to_string(a.max_seq_len) +
                     " does not match the model file's max_seq_len " +
                     std::to_string(model->config.max_seq_len));
  }

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  std::unique_ptr<Server> server;
  try {
    server = std::make_unique<Server>(model, options);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  server->start();
  out << "listening on ws://" << options.address << ":" << server->port() << " (window "
      << options.window_size << ", max_seq_len " << model->config.max_seq_len << ")" << std::endl;
  int received = 0;
  sigwait(&signals, &received);
  out << "shutting down" << std::endl;
  server->stop();
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Exercise classification from body-landmark time series", "exerclass"};
  app.set_config("--config", "", "TOML/INI file with option defaults (flags override it)");
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate_cmd = app.add_subcommand("generate", "Write a synthetic labeled landmark dataset");
  generate_cmd->add_option("--out", gen.out, "Output landmark file")->required();
  generate_cmd->add_option("--per-class", gen.per_class, "Sequences per class (overrides --counts)");
  generate_cmd->add_option("--counts", gen.spec.counts, "Per-class counts in registry order")
      ->expected(4)
      ->capture_default_str();
  generate_cmd->add_option("--t-min", gen.spec.t_min, "Shortest clip in frames")->capture_default_str();
  generate_cmd->add_option("--t-max", gen.spec.t_max, "Longest clip in frames")->capture_default_str();
  generate_cmd->add_option("--noise", gen.spec.noise_sigma, "Coordinate jitter sigma")->capture_default_str();
  generate_cmd->add_option("--dropout-prob", gen.spec.visibility_dropout_prob,
                           "Per-frame probability of a lost detection")
      ->capture_default_str();
  generate_cmd->add_option("--freq-min", gen.spec.freq_min, "Minimum cycles per clip")->capture_default_str();
  generate_cmd->add_option("--freq-max", gen.spec.freq_max, "Maximum cycles per clip")->capture_default_str();
  generate_cmd->add_option("--end-phase-spread", gen.spec.end_phase_spread,
                           "Clips end within this many radians of a cycle start")
      ->capture_default_str();
  generate_cmd->add_option("--fps", gen.spec.fps, "Frame rate recorded in the header")->capture_default_str();
  generate_cmd->add_option("--seed", gen.spec.seed, "Generator seed")->capture_default_str();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train the stacked LSTM and write a model file");
  train_cmd->add_option("--data", tr.data, "Landmark file")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--model-out", tr.model_out, "Model file to write")->required();
  train_cmd->add_option("--history-out", tr.history_out, "Per-epoch history (JSON lines)");
  train_cmd->add_option("--lstm-units", tr.model.lstm_units, "Units per LSTM layer")->capture_default_str();
  train_cmd->add_option("--num-classes", tr.model.num_classes, "Output classes")->capture_default_str();
  train_cmd->add_option("--max-seq-len", tr.model.max_seq_len, "Padded sequence length")->capture_default_str();
  train_cmd->add_option("--pad-value", tr.model.pad_value, "Feature value of padding frames")->capture_default_str();
  train_cmd->add_option("--batch-size", tr.train.batch_size)->capture_default_str();
  train_cmd->add_option("--epochs", tr.train.epochs)->capture_default_str();
  train_cmd->add_option("--learning-rate", tr.train.learning_rate)->capture_default_str();
  train_cmd->add_option("--rho", tr.train.rmsprop_rho, "RMSProp decay")->capture_default_str();
  train_cmd->add_option("--epsilon", tr.train.rmsprop_epsilon, "RMSProp epsilon")->capture_default_str();
  train_cmd->add_option("--recurrent-dropout", tr.train.recurrent_dropout)->capture_default_str();
  train_cmd->add_option("--val-fraction", tr.train.val_fraction)->capture_default_str();
  train_cmd->add_option("--seed", tr.train.seed)->capture_default_str();
  train_cmd->add_flag("--no-shuffle", tr.no_shuffle, "Keep the training order fixed across epochs");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Confusion matrix and accuracy report");
  eval_cmd->add_option("--data", ev.data, "Labeled landmark file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--model", ev.model, "Model file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--split", ev.split, "all | train | val (recomputed from --seed)")
      ->check(CLI::IsMember({"all", "train", "val"}))
      ->capture_default_str();
  eval_cmd->add_option("--val-fraction", ev.val_fraction)->capture_default_str();
  eval_cmd->add_option("--seed", ev.seed, "Seed used for training (selects the split)")->capture_default_str();
  eval_cmd->add_option("--report-json", ev.report_json, "Machine-readable report file");
  eval_cmd->add_option("--report-table", ev.report_table, "Human-readable report file");
  eval_cmd->add_flag("--shuffled-frames", ev.shuffled_frames,
                     "Shuffle frames within each sequence before classifying");

  PredictArgs pr;
  auto* predict_cmd = app.add_subcommand("predict", "Per-sequence labels for a landmark file");
  predict_cmd->add_option("--data", pr.data, "Landmark file")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--model", pr.model, "Model file")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--out", pr.out, "Output file (JSON lines); stdout if omitted");

  ServeArgs sv;
  auto* serve_cmd = app.add_subcommand("serve", "Run the WebSocket classification service");
  serve_cmd->add_option("--listen", sv.listen, "<addr:port>")->capture_default_str();
  serve_cmd->add_option("--model", sv.model, "Model file")->required()->check(CLI::ExistingFile);
  serve_cmd->add_option("--window", sv.window, "Sliding window size in frames")->capture_default_str();
  serve_cmd->add_option("--max-seq-len", sv.max_seq_len, "Must equal the model's max_seq_len when given");
  serve_cmd->add_option("--log", sv.log, "Append-only classification log file");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    err << "run with --help for usage\n";
    return kExitUsage;
  }

  for (auto* sub : app.get_subcommands()) {
    out << "# effective configuration\n[" << sub->get_name() << "]\n"
        << sub->config_to_str(true, false) << std::flush;
  }

  try {
    if (generate_cmd->parsed()) return do_generate(gen, out);
    if (train_cmd->parsed()) return do_train(tr, out);
    if (eval_cmd->parsed()) return do_eval(ev, out);
    if (predict_cmd->parsed()) return do_predict(pr, out);
    if (serve_cmd->parsed()) return do_serve(sv, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace exerclass::cli
