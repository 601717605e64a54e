// SPDX-License-Identifier: Apache-2.0
//
// linmark: pipeline entry points. Commands write their artifacts into a
// workspace directory and record a manifest per run in the registry, so
// every downstream step can name the upstream command it is missing.
//
//   prepare      CHAT corpus -> normalized records + split manifest
//   train        records -> fine-tuned checkpoints + history
//   evaluate     checkpoints -> metrics reports (with deviation column)
//   markers      checkpoints -> marker tables (cohort summaries)
//   longitudinal markers -> cohort tests + behaviour associations
//   report       everything present -> one consolidated document
//   fixture      writes the synthetic demonstration corpus

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "linmark/baselines.hpp"
#include "linmark/chat.hpp"
#include "linmark/corpus.hpp"
#include "linmark/errors.hpp"
#include "linmark/eval.hpp"
#include "linmark/manifest.hpp"
#include "linmark/markers.hpp"
#include "linmark/stats.hpp"
#include "linmark/synthetic.hpp"
#include "linmark/tiny_encoder.hpp"
#include "linmark/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace linmark;

namespace {

// ---- configuration -------------------------------------------------------

struct AppConfig {
  TrainingConfig training;
  TinyEncoderConfig backend;  // vocab_size filled in at train time
  std::array<std::string, kNumLabels> verbalizer = Verbalizer::default_words();
  LabelDefinitions definitions = LabelDefinitions::defaults();
  LabelPolicy label_policy;
  std::string embedding_scorer = "toy";
  std::string word_fluency_scorer = "toy";
  json snapshot;  // the merged configuration, for manifests
};

AppConfig load_config(const std::string& path) {
  AppConfig cfg;
  cfg.backend.max_seq_len = 160;
  cfg.backend.d_model = 32;
  cfg.backend.n_heads = 2;
  cfg.backend.n_layers = 2;
  cfg.backend.d_ffn = 64;
  json j = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw MissingArtifactError("cannot read config file " + path);
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ConfigError("config file " + path + ": " + e.what());
    }
  }
  if (j.contains("training")) {
    const json& t = j["training"];
    cfg.training.learning_rate = t.value("learning_rate", cfg.training.learning_rate);
    cfg.training.batch_size = t.value("batch_size", cfg.training.batch_size);
    if (t.contains("optimizer")) {
      cfg.training.optimizer = optimizer_from_string(t["optimizer"].get<std::string>());
    }
    cfg.training.max_epochs = t.value("max_epochs", cfg.training.max_epochs);
    cfg.training.early_stop_patience =
        t.value("early_stop_patience", cfg.training.early_stop_patience);
    cfg.training.repeats = t.value("repeats", cfg.training.repeats);
    cfg.training.grid_budget = t.value("grid_budget", cfg.training.grid_budget);
    cfg.training.weight_decay = t.value("weight_decay", cfg.training.weight_decay);
    cfg.training.grad_clip = t.value("grad_clip", cfg.training.grad_clip);
  }
  if (j.contains("backend")) {
    const json& b = j["backend"];
    cfg.backend.max_seq_len = b.value("max_seq_len", cfg.backend.max_seq_len);
    cfg.backend.d_model = b.value("d_model", cfg.backend.d_model);
    cfg.backend.n_heads = b.value("n_heads", cfg.backend.n_heads);
    cfg.backend.n_layers = b.value("n_layers", cfg.backend.n_layers);
    cfg.backend.d_ffn = b.value("d_ffn", cfg.backend.d_ffn);
  }
  if (j.contains("verbalizer")) {
    for (DisorderLabel l : kAllLabels) {
      const std::string key(to_string(l));
      if (j["verbalizer"].contains(key)) {
        cfg.verbalizer[label_index(l)] = j["verbalizer"][key].get<std::string>();
      }
    }
  }
  if (j.contains("label_definitions")) {
    for (DisorderLabel l : kAllLabels) {
      const std::string key(to_string(l));
      if (j["label_definitions"].contains(key)) {
        cfg.definitions.text[label_index(l)] =
            j["label_definitions"][key].get<std::string>();
      }
    }
  }
  if (j.contains("label_precedence")) {
    const auto& names = j["label_precedence"];
    if (names.size() != 3) {
      throw ConfigError("label_precedence must list the 3 disorder labels");
    }
    for (std::size_t i = 0; i < 3; ++i) {
      cfg.label_policy.precedence[i] = label_from_string(names[i].get<std::string>());
    }
  }
  if (j.contains("scorers")) {
    cfg.embedding_scorer = j["scorers"].value("embedding", cfg.embedding_scorer);
    cfg.word_fluency_scorer =
        j["scorers"].value("word_fluency", cfg.word_fluency_scorer);
  }
  cfg.snapshot = std::move(j);
  return cfg;
}

// ---- workspace layout -----------------------------------------------------

struct Workspace {
  fs::path root;
  fs::path prepared() const { return root / "prepared"; }
  fs::path records_file() const { return prepared() / "records.jsonl"; }
  fs::path splits_file() const { return prepared() / "splits.json"; }
  fs::path summary_json() const { return prepared() / "summary.json"; }
  fs::path summary_txt() const { return prepared() / "summary.txt"; }
  fs::path runs() const { return root / "runs"; }
  fs::path run_dir(const std::string& id) const { return runs() / id; }
  fs::path reports() const { return root / "reports"; }
  fs::path markers_dir() const { return root / "markers"; }
  fs::path longitudinal_dir() const { return root / "longitudinal"; }
  fs::path registry() const { return root / "registry"; }
};

std::vector<UtteranceRecord> load_records_or_fail(const Workspace& ws) {
  std::ifstream in(ws.records_file());
  if (!in) {
    throw MissingArtifactError("no normalized records at " +
                               ws.records_file().string() +
                               "; run `linmark prepare` first");
  }
  return read_records(in);
}

DatasetSplit load_split_or_fail(const Workspace& ws,
                                const std::vector<UtteranceRecord>& records) {
  std::ifstream in(ws.splits_file());
  if (!in) {
    throw MissingArtifactError("no split manifest at " + ws.splits_file().string() +
                               "; run `linmark prepare` first");
  }
  return read_split_manifest(in, records);
}

// sessions as stored in the record file: key (subject, visit)
struct SessionView {
  std::string subject_id;
  Cohort cohort = Cohort::healthy;
  int visit = 1;
  std::vector<std::string> texts;
  std::optional<int> mmse;
  std::optional<double> cdr;
};

std::vector<SessionView> sessions_from_records(
    const std::vector<UtteranceRecord>& records) {
  std::map<std::pair<std::string, int>, SessionView> grouped;
  for (const auto& r : records) {
    SessionView& s = grouped[{r.subject_id, r.visit}];
    s.subject_id = r.subject_id;
    s.cohort = r.cohort;
    s.visit = r.visit;
    s.texts.push_back(r.text);
    if (r.mmse) s.mmse = r.mmse;
    if (r.cdr) s.cdr = r.cdr;
  }
  std::vector<SessionView> out;
  out.reserve(grouped.size());
  for (auto& [key, s] : grouped) out.push_back(std::move(s));
  return out;
}

void write_text_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << text;
}

void write_json_file(const fs::path& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

json read_json_file(const fs::path& path, const std::string& producer) {
  std::ifstream in(path);
  if (!in) {
    throw MissingArtifactError("missing " + path.string() + "; run `linmark " +
                               producer + "` first");
  }
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return j;
}

// ---- prepare ---------------------------------------------------------------

int cmd_prepare(const std::string& corpus_dir, const Workspace& ws,
                std::uint64_t seed, const std::string& config_path) {
  const AppConfig cfg = load_config(config_path);
  std::vector<fs::path> files;
  if (!fs::is_directory(corpus_dir)) {
    throw ValidationError("corpus directory not found: " + corpus_dir);
  }
  for (const auto& entry : fs::recursive_directory_iterator(corpus_dir)) {
    if (entry.path().extension() == ".cha") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) {
    throw ValidationError("no .cha files under " + corpus_dir);
  }

  std::vector<SessionRecord> sessions;
  RunManifest manifest;
  std::size_t failed = 0;
  for (const auto& file : files) {
    manifest.input_digests[file.string()] = file_digest(file);
    std::ifstream in(file);
    try {
      SessionRecord session =
          parse_chat_file(in, file.filename().string(), cfg.label_policy);
      for (const auto& w : session.warnings) {
        std::cerr << "warning: " << file.filename().string() << ": " << w << "\n";
      }
      sessions.push_back(std::move(session));
    } catch (const EmptySessionError& e) {
      std::cerr << "warning: " << file.filename().string() << ": " << e.what()
                << " (skipped)\n";
    } catch (const ChatParseError& e) {
      std::cerr << "error: " << file.filename().string() << ": " << e.what() << "\n";
      ++failed;
    }
  }
  if (failed == files.size()) {
    throw ValidationError("no parseable .cha files under " + corpus_dir);
  }

  const auto subjects = group_by_subject(std::move(sessions));
  const auto records = to_records(subjects);
  fs::create_directories(ws.prepared());
  {
    std::ofstream out(ws.records_file());
    write_records(out, records);
  }

  const ClassCountSummary summary = summarize_classes(subjects);
  json sj{{"excluded", summary.excluded}};
  std::ostringstream table;
  table << "cohort    subjects  sessions  fluent  anomia  disfluency  agrammatism\n";
  for (Cohort cohort : kAllCohorts) {
    if (summary.subjects.find(cohort) == summary.subjects.end()) continue;
    const auto& counts = summary.counts.count(cohort)
                             ? summary.counts.at(cohort)
                             : std::array<std::size_t, kNumLabels>{};
    json row{{"subjects", summary.subjects.at(cohort)},
             {"sessions", summary.sessions.at(cohort)}};
    for (DisorderLabel l : kAllLabels) {
      row[std::string(to_string(l))] = counts[label_index(l)];
    }
    sj[std::string(to_string(cohort))] = row;
    table << std::left << std::setw(10) << to_string(cohort) << std::setw(10)
          << summary.subjects.at(cohort) << std::setw(10)
          << summary.sessions.at(cohort) << std::setw(8)
          << counts[label_index(DisorderLabel::fluent)] << std::setw(8)
          << counts[label_index(DisorderLabel::anomia)] << std::setw(12)
          << counts[label_index(DisorderLabel::disfluency)]
          << counts[label_index(DisorderLabel::agrammatism)] << "\n";
  }
  write_json_file(ws.summary_json(), sj);
  write_text_file(ws.summary_txt(), table.str());

  if (records.empty()) {
    std::cerr << "warning: corpus produced zero labeled utterances; "
                 "no split manifest written\n";
  } else {
    const DatasetSplit split = stratified_split(records, SplitRatios{}, seed);
    for (const auto& w : split.warnings) std::cerr << "warning: " << w << "\n";
    std::ofstream out(ws.splits_file());
    write_split_manifest(out, split);
  }

  manifest.run_id = "prepare-s" + std::to_string(seed);
  manifest.command = "prepare";
  manifest.seed = seed;
  manifest.config = cfg.snapshot;
  manifest.outputs = {ws.records_file().string(), ws.splits_file().string(),
                      ws.summary_json().string()};
  manifest.created_at = now_iso8601();
  save_manifest(ws.registry(), manifest);

  std::cout << table.str();
  std::cout << "records: " << records.size() << " labeled utterances ("
            << summary.excluded << " excluded)\n";
  std::cout << "manifest digest: " << manifest.content_digest() << "\n";
  return 0;
}

// ---- train -----------------------------------------------------------------

struct RunContext {
  Tokenizer tokenizer;
  FormulationContext ctx;
  Strategy strategy = Strategy::standard_finetune;
  std::uint64_t seed = 0;
  int repeats = 1;
  json meta;
};

Tokenizer build_vocabulary(const DatasetSplit& split, const AppConfig& cfg) {
  std::vector<std::string> texts;
  for (const auto& r : split.train) texts.push_back(r.text);
  return Tokenizer::build(texts,
                          required_vocabulary_words(cfg.verbalizer, cfg.definitions));
}

json backend_to_json(const TinyEncoderConfig& b) {
  return json{{"vocab_size", b.vocab_size}, {"max_seq_len", b.max_seq_len},
              {"d_model", b.d_model},       {"n_heads", b.n_heads},
              {"n_layers", b.n_layers},     {"d_ffn", b.d_ffn}};
}

int cmd_train(const Workspace& ws, const std::string& strategy_name,
              std::uint64_t seed, const std::string& config_path,
              const std::string& backend_kind, const std::string& weights_dir,
              int repeats_override, bool grid) {
  const Strategy strategy = strategy_from_string(strategy_name);
  if (strategy == Strategy::random_rate) {
    throw ValidationError(
        "random-rate needs no training; run `linmark evaluate --strategy "
        "random-rate` directly");
  }
  AppConfig cfg = load_config(config_path);
  if (repeats_override > 0) cfg.training.repeats = repeats_override;
  cfg.training.seed = seed;

  const auto records = load_records_or_fail(ws);
  const DatasetSplit split = load_split_or_fail(ws, records);

  std::optional<Tokenizer> tokenizer;
  ModelFactory factory;
  if (backend_kind == "tiny") {
    tokenizer = build_vocabulary(split, cfg);
    cfg.backend.vocab_size = tokenizer->vocab_size();
    factory = fresh_model_factory(cfg.backend);
  } else if (backend_kind == "pretrained") {
    if (weights_dir.empty()) {
      throw ConfigError("--backend pretrained requires --weights <dir>");
    }
    std::ifstream vin(fs::path(weights_dir) / "vocab.txt");
    if (!vin) {
      throw MissingArtifactError("no vocab.txt in " + weights_dir);
    }
    tokenizer = Tokenizer::load(vin);
    const fs::path model_file = fs::path(weights_dir) / "model.bin";
    if (!fs::exists(model_file)) {
      throw MissingArtifactError("no model.bin in " + weights_dir);
    }
    factory = [model_file](std::uint64_t) {
      std::ifstream min(model_file, std::ios::binary);
      return TinyEncoder::load(min);
    };
    {
      std::ifstream min(model_file, std::ios::binary);
      cfg.backend = TinyEncoder::load(min).config();
    }
  } else {
    throw ConfigError("unknown backend '" + backend_kind + "' (tiny|pretrained)");
  }

  FormulationContext ctx;
  ctx.tokenizer = &*tokenizer;
  ctx.verbalizer = Verbalizer::validated(cfg.verbalizer, *tokenizer);
  ctx.definitions = cfg.definitions;
  ctx.max_len = cfg.backend.max_seq_len;

  if (grid) {
    std::cout << "grid search over " << cfg.training.grid_budget
              << " sampled configurations\n";
    double best = std::numeric_limits<double>::infinity();
    TrainingConfig best_cfg = cfg.training;
    for (const TrainingConfig& candidate : sample_grid(cfg.training, seed)) {
      TrainingConfig one = candidate;
      one.repeats = 1;
      const auto trained = train_strategy(strategy, split, ctx, factory, one);
      const double val = trained.front().history.best_validation_loss;
      std::cout << "  lr=" << candidate.learning_rate
                << " bs=" << candidate.batch_size << " opt="
                << to_string(candidate.optimizer) << " -> val " << val << "\n";
      if (val < best) {
        best = val;
        best_cfg = candidate;
      }
    }
    best_cfg.repeats = cfg.training.repeats;
    best_cfg.seed = seed;
    cfg.training = best_cfg;
    std::cout << "selected lr=" << cfg.training.learning_rate
              << " bs=" << cfg.training.batch_size
              << " opt=" << to_string(cfg.training.optimizer) << "\n";
  }

  const std::string run_id = "train-" + strategy_name + "-s" + std::to_string(seed);
  const fs::path run_dir = ws.run_dir(run_id);
  const auto trained = train_strategy(strategy, split, ctx, factory, cfg.training);

  RunManifest manifest;
  manifest.run_id = run_id;
  manifest.command = "train";
  manifest.strategy = strategy_name;
  manifest.seed = seed;
  manifest.config = cfg.snapshot;
  manifest.config["training_resolved"] =
      json{{"learning_rate", cfg.training.learning_rate},
           {"batch_size", cfg.training.batch_size},
           {"optimizer", std::string(to_string(cfg.training.optimizer))},
           {"max_epochs", cfg.training.max_epochs},
           {"early_stop_patience", cfg.training.early_stop_patience},
           {"repeats", cfg.training.repeats}};
  manifest.input_digests[ws.records_file().string()] =
      file_digest(ws.records_file());
  manifest.input_digests[ws.splits_file().string()] = file_digest(ws.splits_file());

  for (std::size_t k = 0; k < trained.size(); ++k) {
    const fs::path best_dir = run_dir / ("repeat_" + std::to_string(k)) / "best";
    fs::create_directories(best_dir);
    {
      std::ofstream out(best_dir / "model.bin", std::ios::binary);
      trained[k].model.save(out);
    }
    {
      std::ofstream out(run_dir / ("repeat_" + std::to_string(k)) / "history.jsonl");
      write_history(out, trained[k].history);
    }
    manifest.outputs.push_back((best_dir / "model.bin").string());
    std::cout << "repeat " << k << ": best validation loss "
              << trained[k].history.best_validation_loss << " at epoch "
              << trained[k].history.best_epoch
              << (trained[k].history.early_stopped ? " (early stop)" : "") << "\n";
  }
  {
    std::ofstream out(run_dir / "vocab.txt");
    tokenizer->save(out);
  }
  json meta{{"strategy", strategy_name},
            {"seed", seed},
            {"repeats", static_cast<int>(trained.size())},
            {"backend", backend_to_json(cfg.backend)},
            {"verbalizer", json::object()},
            {"label_definitions", json::object()}};
  for (DisorderLabel l : kAllLabels) {
    meta["verbalizer"][std::string(to_string(l))] = cfg.verbalizer[label_index(l)];
    meta["label_definitions"][std::string(to_string(l))] =
        cfg.definitions.of(l);
  }
  write_json_file(run_dir / "meta.json", meta);
  manifest.outputs.push_back((run_dir / "meta.json").string());
  manifest.created_at = now_iso8601();
  save_manifest(ws.registry(), manifest);
  std::cout << "run " << run_id << " complete\n";
  return 0;
}

// ---- evaluate ---------------------------------------------------------------

RunContext load_run_context(const Workspace& ws, const std::string& run_id,
                            const AppConfig& cfg) {
  const fs::path run_dir = ws.run_dir(run_id);
  const json meta = read_json_file(run_dir / "meta.json", "train");
  std::ifstream vin(run_dir / "vocab.txt");
  if (!vin) {
    throw MissingArtifactError("missing vocabulary in " + run_dir.string() +
                               "; run `linmark train` first");
  }
  RunContext rc{Tokenizer::load(vin), {}, Strategy::standard_finetune, 0, 1, meta};
  rc.strategy = strategy_from_string(meta.at("strategy").get<std::string>());
  rc.seed = meta.at("seed").get<std::uint64_t>();
  rc.repeats = meta.at("repeats").get<int>();
  std::array<std::string, kNumLabels> verbalizer = cfg.verbalizer;
  LabelDefinitions defs = cfg.definitions;
  for (DisorderLabel l : kAllLabels) {
    const std::string key(to_string(l));
    if (meta.contains("verbalizer")) {
      verbalizer[label_index(l)] = meta["verbalizer"].value(key, verbalizer[label_index(l)]);
    }
    if (meta.contains("label_definitions")) {
      defs.text[label_index(l)] =
          meta["label_definitions"].value(key, defs.text[label_index(l)]);
    }
  }
  rc.ctx.tokenizer = &rc.tokenizer;
  rc.ctx.verbalizer = Verbalizer::validated(verbalizer, rc.tokenizer);
  rc.ctx.definitions = defs;
  rc.ctx.max_len = meta.at("backend").at("max_seq_len").get<int>();
  return rc;
}

TinyEncoder load_repeat_model(const Workspace& ws, const std::string& run_id,
                              int repeat) {
  const fs::path file =
      ws.run_dir(run_id) / ("repeat_" + std::to_string(repeat)) / "best" / "model.bin";
  std::ifstream in(file, std::ios::binary);
  if (!in) {
    throw MissingArtifactError("missing checkpoint " + file.string() +
                               "; run `linmark train` first");
  }
  return TinyEncoder::load(in);
}

json report_to_json(const MetricsReport& r) {
  json per_class = json::object();
  for (DisorderLabel l : kAllLabels) {
    const std::size_t c = label_index(l);
    json entry;
    if (r.per_class_accuracy[c]) entry["accuracy"] = *r.per_class_accuracy[c];
    if (r.per_class_f1[c]) entry["f1"] = *r.per_class_f1[c];
    per_class[std::string(to_string(l))] = entry;
  }
  json confusion = json::array();
  for (const auto& row : r.confusion) confusion.push_back(row);
  return json{{"per_class", per_class},
              {"macro_accuracy", r.macro_accuracy},
              {"macro_f1", r.macro_f1},
              {"confusion", confusion},
              {"warnings", r.warnings}};
}

std::string format_metrics_row(const std::string& name, const MetricsReport& r,
                               const std::optional<json>& reference) {
  std::ostringstream out;
  out << std::left << std::setw(26) << name << std::right << std::fixed
      << std::setprecision(1);
  for (DisorderLabel l : kAllLabels) {
    const std::size_t c = label_index(l);
    out << std::setw(7)
        << (r.per_class_accuracy[c] ? *r.per_class_accuracy[c] : 0.0) << std::setw(7)
        << (r.per_class_f1[c] ? *r.per_class_f1[c] : 0.0);
  }
  out << std::setw(7) << r.macro_accuracy << std::setw(7) << r.macro_f1;
  if (reference) {
    const double d_acc = r.macro_accuracy - (*reference)["macro_accuracy"].get<double>();
    const double d_f1 = r.macro_f1 - (*reference)["macro_f1"].get<double>();
    out << "  (" << std::showpos << d_acc << ", " << d_f1 << std::noshowpos << ")";
  }
  return out.str();
}

const char* kMetricsHeader =
    "strategy                  fluAcc  fluF1  anoAcc  anoF1  disAcc  disF1  "
    "agrAcc  agrF1  mAcc   mF1   (dAcc, dF1 vs standard-finetune)";

int cmd_evaluate(const Workspace& ws, const std::string& strategy_name,
                 std::string run_id, std::uint64_t seed,
                 const std::string& config_path) {
  const AppConfig cfg = load_config(config_path);
  const auto records = load_records_or_fail(ws);
  const DatasetSplit split = load_split_or_fail(ws, records);
  const auto test = to_labeled(split.test);
  const auto train = to_labeled(split.train);

  std::vector<MetricsReport> reports;
  std::vector<json> per_repeat;
  std::string resolved_strategy = strategy_name;

  if (strategy_name == "random-rate") {
    for (int k = 0; k < cfg.training.repeats; ++k) {
      // the rule never consults a model, but the runner needs a context
      Tokenizer tokenizer = build_vocabulary(split, cfg);
      FormulationContext ctx;
      ctx.tokenizer = &tokenizer;
      ctx.verbalizer = Verbalizer::validated(cfg.verbalizer, tokenizer);
      ctx.definitions = cfg.definitions;
      ctx.max_len = cfg.backend.max_seq_len;
      StrategyRunner runner(Strategy::random_rate, ctx, train,
                            seed + static_cast<std::uint64_t>(k));
      TinyEncoderConfig stub_cfg = cfg.backend;
      stub_cfg.vocab_size = tokenizer.vocab_size();
      TinyEncoder stub(stub_cfg);
      std::vector<Prediction> predictions;
      for (const auto& u : test) predictions.push_back(runner.predict(stub, u));
      reports.push_back(evaluate(predictions));
      per_repeat.push_back(report_to_json(reports.back()));
    }
  } else {
    if (run_id.empty()) {
      const auto latest = latest_run(ws.registry(), "train", strategy_name);
      if (!latest) {
        throw MissingArtifactError("no trained run for strategy '" + strategy_name +
                                   "'; run `linmark train` first");
      }
      run_id = latest->run_id;
    }
    const RunContext rc = load_run_context(ws, run_id, cfg);
    if (!strategy_name.empty() &&
        strategy_from_string(strategy_name) != rc.strategy) {
      throw ConfigError("run " + run_id + " was trained under '" +
                        std::string(to_string(rc.strategy)) +
                        "', not '" + strategy_name + "'");
    }
    resolved_strategy = std::string(to_string(rc.strategy));
    for (int k = 0; k < rc.repeats; ++k) {
      const TinyEncoder model = load_repeat_model(ws, run_id, k);
      StrategyRunner runner(rc.strategy, rc.ctx, train,
                            rc.seed + static_cast<std::uint64_t>(k));
      std::vector<Prediction> predictions;
      for (const auto& u : test) predictions.push_back(runner.predict(model, u));
      reports.push_back(evaluate(predictions));
      per_repeat.push_back(report_to_json(reports.back()));
    }
  }

  const MetricsReport averaged = average_reports(reports);
  for (const auto& w : averaged.warnings) std::cerr << "warning: " << w << "\n";

  // deviation column vs the stored standard-finetune reference
  std::optional<json> reference;
  if (resolved_strategy != "standard-finetune") {
    const fs::path ref_file = ws.reports() / "evaluate-standard-finetune.json";
    if (fs::exists(ref_file)) reference = read_json_file(ref_file, "evaluate")["averaged"];
  }

  json out{{"strategy", resolved_strategy},
           {"seed", seed},
           {"averaged", report_to_json(averaged)},
           {"repeats", per_repeat}};
  if (reference) {
    out["deviation_vs_standard_finetune"] = {
        {"macro_accuracy",
         averaged.macro_accuracy - (*reference)["macro_accuracy"].get<double>()},
        {"macro_f1", averaged.macro_f1 - (*reference)["macro_f1"].get<double>()}};
  }
  const fs::path report_file = ws.reports() / ("evaluate-" + resolved_strategy + ".json");
  write_json_file(report_file, out);

  std::ostringstream table;
  table << kMetricsHeader << "\n"
        << format_metrics_row(resolved_strategy, averaged, reference) << "\n";
  write_text_file(ws.reports() / ("evaluate-" + resolved_strategy + ".txt"),
                  table.str());
  std::cout << table.str();

  RunManifest manifest;
  manifest.run_id = "evaluate-" + resolved_strategy + "-s" + std::to_string(seed);
  manifest.command = "evaluate";
  manifest.strategy = resolved_strategy;
  manifest.seed = seed;
  manifest.config = cfg.snapshot;
  manifest.input_digests[ws.records_file().string()] = file_digest(ws.records_file());
  manifest.outputs = {report_file.string()};
  manifest.metrics["macro_accuracy"] = averaged.macro_accuracy;
  manifest.metrics["macro_f1"] = averaged.macro_f1;
  manifest.created_at = now_iso8601();
  save_manifest(ws.registry(), manifest);
  return 0;
}

// ---- markers ----------------------------------------------------------------

std::string resolve_marker_run(const Workspace& ws, const std::string& strategy_flag) {
  if (strategy_flag == "best") {
    const auto best = best_evaluated_run(ws.registry());
    if (!best) {
      throw MissingArtifactError(
          "no evaluated runs in the registry; run `linmark evaluate` first");
    }
    const auto trained = latest_run(ws.registry(), "train", best->strategy);
    if (!trained) {
      throw MissingArtifactError("no trained run for strategy '" + best->strategy +
                                 "'; run `linmark train` first");
    }
    return trained->run_id;
  }
  const auto trained = latest_run(ws.registry(), "train", strategy_flag);
  if (!trained) {
    throw MissingArtifactError("no trained run for strategy '" + strategy_flag +
                               "'; run `linmark train` first");
  }
  return trained->run_id;
}

int best_repeat_for(const Workspace& ws, const std::string& strategy, int repeats) {
  const fs::path report_file = ws.reports() / ("evaluate-" + strategy + ".json");
  if (!fs::exists(report_file)) return 0;
  const json report = read_json_file(report_file, "evaluate");
  int best = 0;
  double best_f1 = -1.0;
  const auto& list = report.at("repeats");
  for (int k = 0; k < repeats && k < static_cast<int>(list.size()); ++k) {
    const double f1 = list[static_cast<std::size_t>(k)].at("macro_f1").get<double>();
    if (f1 > best_f1) {
      best_f1 = f1;
      best = k;
    }
  }
  return best;
}

int cmd_markers(const Workspace& ws, const std::string& marker_name,
                const std::string& strategy_flag, const std::string& config_path) {
  const AppConfig cfg = load_config(config_path);
  const auto records = load_records_or_fail(ws);
  const auto sessions = sessions_from_records(records);

  std::vector<MarkerSeries> series;
  std::map<std::string, MarkerSeries> by_subject;
  std::string source_desc;

  if (marker_name == "incoherence" || marker_name == "word-fluency") {
    const auto embedder = make_embedding_scorer(cfg.embedding_scorer);
    const auto fluency = make_word_fluency_scorer(cfg.word_fluency_scorer);
    source_desc = marker_name + " baseline scorer";
    for (const auto& s : sessions) {
      double value = 0.0;
      try {
        value = marker_name == "incoherence"
                    ? incoherence_marker(s.texts, *embedder)
                    : word_fluency_marker(s.texts, *fluency);
      } catch (const ValidationError& e) {
        std::cerr << "warning: " << s.subject_id << " visit " << s.visit << ": "
                  << e.what() << "\n";
        continue;
      }
      MarkerSeries& m = by_subject[s.subject_id];
      m.subject_id = s.subject_id;
      m.cohort = s.cohort;
      m.kind = marker_name;
      m.values.push_back(MarkerPoint{s.visit, value});
    }
  } else {
    const MarkerKind kind = marker_kind_from_string(marker_name);
    const std::string run_id = resolve_marker_run(ws, strategy_flag);
    const RunContext rc = load_run_context(ws, run_id, cfg);
    const DatasetSplit split = load_split_or_fail(ws, records);
    const auto train = to_labeled(split.train);
    const int repeat =
        best_repeat_for(ws, std::string(to_string(rc.strategy)), rc.repeats);
    const TinyEncoder model = load_repeat_model(ws, run_id, repeat);
    StrategyRunner runner(rc.strategy, rc.ctx, train,
                          rc.seed + static_cast<std::uint64_t>(repeat));
    source_desc = run_id + " repeat " + std::to_string(repeat);
    for (const auto& s : sessions) {
      std::vector<std::array<double, kNumLabels>> probs;
      for (const auto& text : s.texts) {
        probs.push_back(runner.class_probabilities(model, text));
      }
      MarkerSeries& m = by_subject[s.subject_id];
      m.subject_id = s.subject_id;
      m.cohort = s.cohort;
      m.kind = marker_name;
      m.values.push_back(MarkerPoint{s.visit, session_marker_value(probs, kind)});
    }
  }

  for (auto& [subject, m] : by_subject) {
    std::sort(m.values.begin(), m.values.end(),
              [](const MarkerPoint& a, const MarkerPoint& b) {
                return a.visit < b.visit;
              });
    series.push_back(std::move(m));
  }
  if (series.empty()) {
    throw ValidationError("no sessions produced a defined '" + marker_name +
                          "' marker");
  }

  fs::create_directories(ws.markers_dir());
  const fs::path records_file = ws.markers_dir() / (marker_name + ".jsonl");
  {
    std::ofstream out(records_file);
    write_marker_records(out, series);
  }

  const CohortSummary summary = cohort_summary(series, marker_name);
  for (const auto& w : summary.warnings) std::cerr << "warning: " << w << "\n";
  json sj = json::array();
  std::ostringstream table;
  table << "cohort    n        marker (std)          d_end-start (std)     "
           "d_long (std)\n";
  for (const auto& row : summary.rows) {
    sj.push_back(json{{"cohort", std::string(to_string(row.cohort))},
                      {"n_subjects", row.n_subjects},
                      {"marker_mean", row.marker_mean},
                      {"marker_std", row.marker_std},
                      {"delta_end_start_mean", row.delta_end_start_mean},
                      {"delta_end_start_std", row.delta_end_start_std},
                      {"delta_long_mean", row.delta_long_mean},
                      {"delta_long_std", row.delta_long_std}});
    table << std::left << std::setw(10) << to_string(row.cohort) << std::setw(9)
          << row.n_subjects << std::fixed << std::setprecision(3) << std::setw(8)
          << row.marker_mean << "(" << row.marker_std << ")      " << std::showpos
          << std::setw(8) << row.delta_end_start_mean << std::noshowpos << "("
          << row.delta_end_start_std << ")      " << std::showpos << std::setw(8)
          << row.delta_long_mean << std::noshowpos << "(" << row.delta_long_std
          << ")\n";
  }
  write_json_file(ws.markers_dir() / (marker_name + "-cohort.json"),
                  json{{"marker", marker_name}, {"source", source_desc}, {"rows", sj}});
  write_text_file(ws.markers_dir() / (marker_name + "-cohort.txt"), table.str());
  std::cout << "marker: " << marker_name << " (source: " << source_desc << ")\n"
            << table.str();

  RunManifest manifest;
  manifest.run_id = "markers-" + marker_name;
  manifest.command = "markers";
  manifest.strategy = strategy_flag;
  manifest.config = cfg.snapshot;
  manifest.input_digests[ws.records_file().string()] = file_digest(ws.records_file());
  manifest.outputs = {records_file.string(),
                      (ws.markers_dir() / (marker_name + "-cohort.json")).string()};
  manifest.created_at = now_iso8601();
  save_manifest(ws.registry(), manifest);
  return 0;
}

// ---- longitudinal -------------------------------------------------------------

int cmd_longitudinal(const Workspace& ws, const std::string& marker_name,
                     const std::string& behaviour_name, int min_sessions) {
  const BehaviourMeasure behaviour = behaviour_from_string(behaviour_name);
  const fs::path marker_file = ws.markers_dir() / (marker_name + ".jsonl");
  std::ifstream min(marker_file);
  if (!min) {
    throw MissingArtifactError("missing " + marker_file.string() +
                               "; run `linmark markers` first");
  }
  auto series = read_marker_records(min);
  series.erase(std::remove_if(series.begin(), series.end(),
                              [min_sessions](const MarkerSeries& s) {
                                return s.values.size() <
                                       static_cast<std::size_t>(min_sessions);
                              }),
               series.end());
  if (series.empty()) {
    throw ValidationError("no subject has >= " + std::to_string(min_sessions) +
                          " sessions with the '" + marker_name + "' marker");
  }

  // cohort discrimination tests on subject-level summaries
  std::map<Cohort, std::vector<double>> means, deltas;
  for (const auto& s : series) {
    double total = 0.0;
    for (const auto& p : s.values) total += p.value;
    means[s.cohort].push_back(total / static_cast<double>(s.values.size()));
    deltas[s.cohort].push_back(delta_end_start(s));
  }
  json tests = json::array();
  const std::pair<Cohort, Cohort> pairs[] = {{Cohort::healthy, Cohort::mci},
                                             {Cohort::healthy, Cohort::ad},
                                             {Cohort::mci, Cohort::ad}};
  std::ostringstream test_table;
  test_table << "variable        pair              U        p        method\n";
  for (const auto& [x, variable] :
       std::vector<std::pair<const std::map<Cohort, std::vector<double>>*,
                             std::string>>{{&means, "marker-mean"},
                                           {&deltas, "delta-end-start"}}) {
    for (const auto& [ca, cb] : pairs) {
      const auto ia = x->find(ca);
      const auto ib = x->find(cb);
      if (ia == x->end() || ib == x->end()) continue;
      const TestResult r = mann_whitney(ia->second, ib->second);
      tests.push_back(json{{"variable", variable},
                           {"cohort_a", std::string(to_string(ca))},
                           {"cohort_b", std::string(to_string(cb))},
                           {"statistic", r.statistic},
                           {"p_value", r.p_value},
                           {"method", std::string(to_string(r.method))},
                           {"n_a", r.n_a},
                           {"n_b", r.n_b}});
      test_table << std::left << std::setw(16) << variable << std::setw(18)
                 << (std::string(to_string(ca)) + " vs " + to_string(cb).data())
                 << std::setw(9) << r.statistic << std::setw(9) << std::setprecision(4)
                 << r.p_value << to_string(r.method) << "\n";
    }
  }

  // behaviour association needs the per-session scores from the records
  const auto records = load_records_or_fail(ws);
  std::map<std::pair<std::string, int>, std::optional<double>> scores;
  for (const auto& r : records) {
    std::optional<double> score;
    if (behaviour == BehaviourMeasure::mmse && r.mmse) {
      score = static_cast<double>(*r.mmse);
    }
    if (behaviour == BehaviourMeasure::cdr && r.cdr) score = *r.cdr;
    scores[{r.subject_id, r.visit}] = score;
  }
  std::vector<SubjectTrajectory> subjects;
  for (const auto& s : series) {
    SubjectTrajectory t;
    t.marker = s;
    for (const auto& p : s.values) {
      const auto it = scores.find({s.subject_id, p.visit});
      t.behaviour.push_back(it == scores.end() ? std::nullopt : it->second);
    }
    subjects.push_back(std::move(t));
  }
  const AssociationResult assoc = behaviour_association(subjects, behaviour);
  for (const auto& e : assoc.excluded) std::cerr << "warning: excluded " << e << "\n";

  fs::create_directories(ws.longitudinal_dir());
  const std::string stem = marker_name + "-" + behaviour_name;
  {
    std::ofstream out(ws.longitudinal_dir() / (stem + "-points.tsv"));
    write_points_tsv(out, assoc.points);
  }
  {
    std::ofstream out(ws.longitudinal_dir() / (stem + "-scatter.svg"));
    write_scatter_svg(out, assoc.points,
                      behaviour == BehaviourMeasure::mmse ? "mean MMSE" : "mean CDR",
                      "mean adjacent-session change in " + marker_name + " marker");
  }
  json assoc_json{{"marker", marker_name},
                  {"behaviour", behaviour_name},
                  {"r", assoc.test.statistic},
                  {"p_value", assoc.test.p_value},
                  {"n", assoc.points.size()},
                  {"excluded", assoc.excluded}};
  if (assoc.sign_adjusted_r) assoc_json["sign_adjusted_r"] = *assoc.sign_adjusted_r;
  write_json_file(ws.longitudinal_dir() / (stem + "-association.json"), assoc_json);
  write_json_file(ws.longitudinal_dir() / (marker_name + "-tests.json"),
                  json{{"marker", marker_name}, {"tests", tests}});

  std::cout << test_table.str();
  std::cout << "association (" << behaviour_name << "): r=" << assoc.test.statistic
            << " p=" << assoc.test.p_value << " n=" << assoc.points.size() << "\n";

  RunManifest manifest;
  manifest.run_id = "longitudinal-" + stem;
  manifest.command = "longitudinal";
  manifest.config = json{{"marker", marker_name},
                         {"behaviour", behaviour_name},
                         {"min_sessions", min_sessions}};
  manifest.input_digests[marker_file.string()] = file_digest(marker_file);
  manifest.outputs = {(ws.longitudinal_dir() / (stem + "-association.json")).string(),
                      (ws.longitudinal_dir() / (stem + "-scatter.svg")).string()};
  manifest.created_at = now_iso8601();
  save_manifest(ws.registry(), manifest);
  return 0;
}

// ---- report --------------------------------------------------------------------

int cmd_report(const Workspace& ws) {
  std::ostringstream doc;
  doc << "# linmark consolidated report\n\n";

  doc << "## Data summary\n\n";
  if (fs::exists(ws.summary_txt())) {
    std::ifstream in(ws.summary_txt());
    doc << "```\n" << std::string(std::istreambuf_iterator<char>(in), {}) << "```\n\n";
  } else {
    doc << "_absent (run `linmark prepare`)_\n\n";
  }

  doc << "## Evaluation\n\n";
  bool any_eval = false;
  if (fs::exists(ws.reports())) {
    std::optional<json> reference;
    const fs::path ref_file = ws.reports() / "evaluate-standard-finetune.json";
    if (fs::exists(ref_file)) reference = read_json_file(ref_file, "evaluate")["averaged"];
    doc << "```\n" << kMetricsHeader << "\n";
    std::vector<fs::path> report_files;
    for (const auto& entry : fs::directory_iterator(ws.reports())) {
      if (entry.path().extension() == ".json") report_files.push_back(entry.path());
    }
    std::sort(report_files.begin(), report_files.end());
    for (const auto& file : report_files) {
      const json r = read_json_file(file, "evaluate");
      MetricsReport m;
      m.macro_accuracy = r["averaged"]["macro_accuracy"].get<double>();
      m.macro_f1 = r["averaged"]["macro_f1"].get<double>();
      for (DisorderLabel l : kAllLabels) {
        const auto& pc = r["averaged"]["per_class"][std::string(to_string(l))];
        if (pc.contains("accuracy")) {
          m.per_class_accuracy[label_index(l)] = pc["accuracy"].get<double>();
        }
        if (pc.contains("f1")) m.per_class_f1[label_index(l)] = pc["f1"].get<double>();
      }
      const std::string strategy = r["strategy"].get<std::string>();
      doc << format_metrics_row(strategy, m,
                                strategy == "standard-finetune" ? std::nullopt
                                                                : reference)
          << "\n";
      any_eval = true;
    }
    doc << "```\n\n";
  }
  if (!any_eval) doc << "_absent (run `linmark evaluate`)_\n\n";

  doc << "## Markers\n\n";
  bool any_marker = false;
  if (fs::exists(ws.markers_dir())) {
    for (const auto& entry : fs::directory_iterator(ws.markers_dir())) {
      if (entry.path().filename().string().ends_with("-cohort.txt")) {
        std::ifstream in(entry.path());
        doc << "### " << entry.path().filename().string() << "\n\n```\n"
            << std::string(std::istreambuf_iterator<char>(in), {}) << "```\n\n";
        any_marker = true;
      }
    }
  }
  if (!any_marker) doc << "_absent (run `linmark markers`)_\n\n";

  doc << "## Longitudinal analysis\n\n";
  bool any_long = false;
  if (fs::exists(ws.longitudinal_dir())) {
    for (const auto& entry : fs::directory_iterator(ws.longitudinal_dir())) {
      if (entry.path().extension() == ".json") {
        const json j = read_json_file(entry.path(), "longitudinal");
        doc << "### " << entry.path().filename().string() << "\n\n```json\n"
            << j.dump(2) << "\n```\n\n";
        any_long = true;
      }
    }
  }
  if (!any_long) doc << "_absent (run `linmark longitudinal`)_\n\n";

  const fs::path out_file = ws.root / "report.md";
  write_text_file(out_file, doc.str());
  std::cout << "report written to " << out_file.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"utterance-level language-disorder learning and digital "
               "linguistic markers"};
  app.require_subcommand(1);

  std::string work = "linmark-work";
  app.add_option("--work", work, "workspace directory for pipeline artifacts");

  // prepare
  auto* prepare = app.add_subcommand("prepare", "parse CHAT files into records");
  std::string corpus_dir;
  std::uint64_t seed = 7;
  std::string config_path;
  prepare->add_option("--corpus", corpus_dir, "directory of .cha files")->required();
  prepare->add_option("--seed", seed, "split seed");
  prepare->add_option("--config", config_path, "JSON configuration file");

  // train
  auto* train = app.add_subcommand("train", "fine-tune a strategy");
  std::string strategy = "standard-finetune";
  std::string backend = "tiny";
  std::string weights;
  int repeats = 0;
  bool grid = false;
  train->add_option("--strategy", strategy, "task formulation strategy")->required();
  train->add_option("--seed", seed, "training seed");
  train->add_option("--config", config_path, "JSON configuration file");
  train->add_option("--backend", backend, "tiny|pretrained");
  train->add_option("--weights", weights, "checkpoint dir for --backend pretrained");
  train->add_option("--repeats", repeats, "override configured repeats");
  train->add_flag("--grid", grid, "grid-search the hyperparameter pools first");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "score a trained run on the test split");
  std::string run_id;
  evaluate->add_option("--strategy", strategy, "strategy to evaluate")->required();
  evaluate->add_option("--run", run_id, "explicit run id (default: latest for strategy)");
  evaluate->add_option("--seed", seed, "seed for random-rate evaluation");
  evaluate->add_option("--config", config_path, "JSON configuration file");

  // markers
  auto* markers = app.add_subcommand("markers", "compute session markers");
  std::string marker = "communication";
  std::string marker_strategy = "best";
  markers->add_option("--marker", marker,
                      "communication|anomia|disfluency|agrammatism|incoherence|"
                      "word-fluency");
  markers->add_option("--strategy", marker_strategy,
                      "model-marker source: best|<strategy name>");
  markers->add_option("--config", config_path, "JSON configuration file");

  // longitudinal
  auto* longitudinal =
      app.add_subcommand("longitudinal", "cohort tests and behaviour associations");
  std::string behaviour = "mmse";
  int min_sessions = 3;
  longitudinal->add_option("--marker", marker, "marker kind to analyze");
  longitudinal->add_option("--behaviour", behaviour, "mmse|cdr");
  longitudinal->add_option("--min-sessions", min_sessions,
                           "minimum sessions per subject");

  // report
  auto* report = app.add_subcommand("report", "consolidate all artifacts");

  // fixture
  auto* fixture = app.add_subcommand("fixture", "write the synthetic corpus");
  std::string fixture_out = "fixture-corpus";
  SyntheticCorpusConfig fixture_cfg;
  fixture->add_option("--out", fixture_out, "output directory");
  fixture->add_option("--seed", fixture_cfg.seed, "generator seed");
  fixture->add_option("--subjects", fixture_cfg.subjects_per_cohort,
                      "subjects per cohort");
  fixture->add_option("--sessions", fixture_cfg.sessions_per_subject,
                      "sessions per subject");
  fixture->add_option("--utterances", fixture_cfg.utterances_per_session,
                      "utterances per session");

  CLI11_PARSE(app, argc, argv);

  const Workspace ws{fs::path(work)};
  try {
    if (prepare->parsed()) return cmd_prepare(corpus_dir, ws, seed, config_path);
    if (train->parsed()) {
      return cmd_train(ws, strategy, seed, config_path, backend, weights, repeats,
                       grid);
    }
    if (evaluate->parsed()) {
      return cmd_evaluate(ws, strategy, run_id, seed, config_path);
    }
    if (markers->parsed()) return cmd_markers(ws, marker, marker_strategy, config_path);
    if (longitudinal->parsed()) {
      return cmd_longitudinal(ws, marker, behaviour, min_sessions);
    }
    if (report->parsed()) return cmd_report(ws);
    if (fixture->parsed()) {
      const auto paths = write_synthetic_corpus(fixture_out, fixture_cfg);
      std::cout << "wrote " << paths.size() << " sessions to " << fixture_out << "\n";
      return 0;
    }
  } catch (const MissingArtifactError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
