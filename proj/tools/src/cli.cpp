// Copyright 2026 The maskrec Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#if defined(__GLIBC__)
#include <malloc.h>
#endif
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>

#include "maskrec/analysis.hpp"
#include "maskrec/errors.hpp"
#include "run_config.hpp"

namespace maskrec::cli {

namespace {

using nlohmann::json;

struct GlobalOptions {
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  bool deterministic = false;
};

// Raised by a command that ran to completion but failed its own check.
struct VerificationFailure : Error {
  using Error::Error;
};

template <typename RecordT>
std::pair<std::vector<RecordT>, std::vector<RecordT>> tail_split(std::vector<RecordT> all, double fraction) {
  const auto n_eval = static_cast<std::size_t>(static_cast<double>(all.size()) * fraction);
  if (n_eval == 0 || n_eval >= all.size()) {
    throw ConfigError("eval_fraction", "leaves an empty train or eval split over " + std::to_string(all.size()) +
                                           " records");
  }
  std::vector<RecordT> eval(std::make_move_iterator(all.end() - static_cast<std::ptrdiff_t>(n_eval)),
                            std::make_move_iterator(all.end()));
  all.resize(all.size() - n_eval);
  return {std::move(all), std::move(eval)};
}

std::pair<std::vector<Record>, std::vector<Record>> load_tabular(const DataConfig& d) {
  if (d.spec.format == DataFormat::synthetic) {
    DatasetSpec train = d.spec, eval = d.spec;
    train.n = d.n_train;
    eval.n = d.n_eval;
    eval.seed = d.eval_seed;
    return {load_records(train), load_records(eval)};
  }
  if (d.eval_path) {
    DatasetSpec eval = d.spec;
    eval.path = *d.eval_path;
    return {load_records(d.spec), load_records(eval)};
  }
  return tail_split(load_records(d.spec), d.eval_fraction);
}

std::pair<std::vector<SequenceRecord>, std::vector<SequenceRecord>> load_sequential(const DataConfig& d) {
  if (d.eval_path) {
    DatasetSpec eval = d.spec;
    eval.path = *d.eval_path;
    eval.seed = d.eval_seed;
    return {load_sequences(d.spec).records, load_sequences(eval).records};
  }
  return tail_split(load_sequences(d.spec).records, d.eval_fraction);
}

json report_json(const MetricsReport& r) {
  return json{{"iter", r.iteration},
              {"bce", r.bce},
              {"acc", r.accuracy},
              {"auc", r.auc ? json(*r.auc) : json(nullptr)},
              {"wall_ms", r.wall_ms}};
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out.flush()) throw Error("failed writing '" + path.string() + "'");
}

struct TrainRun {
  TrainResult result;
  std::filesystem::path model_path;
};

// Trains one model, streaming evaluations to the metrics CSV and `out`.
template <typename Model, typename RecordT>
TrainRun run_training(Model& model, const std::vector<RecordT>& train_set, const std::vector<RecordT>& eval_set,
                      const TrainConfig& tc, const std::filesystem::path& dir, const std::string& stem,
                      const GlobalOptions& g, std::ostream& out) {
  std::ofstream csv(dir / (stem == "model" ? "metrics.csv" : "metrics_" + stem + ".csv"),
                    std::ios::binary | std::ios::trunc);
  if (!csv) throw Error("cannot write metrics CSV in '" + dir.string() + "'");
  csv << kMetricsCsvHeader << "\n";
  csv.flush();
  auto on_eval = [&](const MetricsReport& report) {
    MetricsReport r = report;
    if (g.deterministic) r.wall_ms = 0;
    csv << format_metrics_csv_row(r) << "\n";
    csv.flush();
    if (!g.quiet) out << (stem == "model" ? "" : stem + " ") << format_metrics_line(r) << "\n";
  };
  TrainRun run;
  run.result = train(model, train_set, eval_set, tc, on_eval);
  if (g.deterministic) {
    for (auto& r : run.result.history) r.wall_ms = 0;
  }
  run.model_path = dir / (stem + ".json");
  save_model(model, run.model_path);
  return run;
}

json run_summary(const TrainRun& run) {
  json j{{"iterations", run.result.iterations},
         {"reached_target", run.result.reached_target},
         {"model_file", run.model_path.filename().string()}};
  j["final"] = run.result.history.empty() ? json(nullptr) : report_json(run.result.history.back());
  return j;
}

int cmd_train(const std::string& config_path, std::optional<double> target_auc, std::optional<std::size_t> max_iters,
              std::optional<std::string> out_dir, bool baseline, const GlobalOptions& g, std::ostream& out) {
  RunConfig cfg = load_run_config(config_path);
  if (g.seed) cfg.train.seed = *g.seed;
  if (target_auc) cfg.train.target_auc = *target_auc;
  if (max_iters) cfg.train.max_iters = *max_iters;
  if (out_dir) cfg.out_dir = *out_dir;
  cross_validate(cfg);
  if (baseline && (cfg.sequence || cfg.model.interaction == InteractionKind::dot)) {
    throw ConfigError("baseline", "the dot-product baseline applies to non-sequential, non-dot models");
  }
  std::filesystem::create_directories(cfg.out_dir);

  // Initialization and the training streams derive from one seed.
  Rng master(cfg.train.seed);
  Rng init_rng = master.split();
  TrainConfig tc = cfg.train;
  tc.seed = master.next_u64();

  json manifest{{"seed", cfg.train.seed},
                {"model", json::parse(model_config_json(cfg.model))},
                {"train",
                 {{"optimizer", std::string(to_string(tc.optimizer))},
                  {"lr", tc.lr},
                  {"batch_size", tc.batch_size},
                  {"max_iters", tc.max_iters},
                  {"target_auc", tc.target_auc ? json(*tc.target_auc) : json(nullptr)},
                  {"eval_every", tc.eval_every}}},
                {"data",
                 {{"format", std::string(to_string(cfg.data.spec.format))},
                  {"path", cfg.data.spec.path.string()},
                  {"eval_path", cfg.data.eval_path ? json(cfg.data.eval_path->string()) : json(nullptr)},
                  {"eval_fraction", cfg.data.eval_fraction},
                  {"n_train", cfg.data.n_train},
                  {"n_eval", cfg.data.n_eval},
                  {"seed", cfg.data.seed},
                  {"eval_seed", cfg.data.eval_seed},
                  {"seq_len", cfg.data.spec.seq_len}}}};

  const auto finish = [&](const TrainRun& run) {
    manifest["result"] = run_summary(run);
    write_file(cfg.out_dir / "manifest.json", manifest.dump(2) + "\n");
  };

  if (cfg.sequence) {
    auto [train_set, eval_set] = load_sequential(cfg.data);
    manifest["records"] = {{"train", train_set.size()}, {"eval", eval_set.size()}};
    manifest["sequence"] = {{"seq_widths", cfg.sequence->seq_widths}};
    RecModelParams base = init_params(cfg.model, init_rng);
    SequenceParams head = init_sequence_params(cfg.model, *cfg.sequence, init_rng);
    SequentialModel model{cfg.model, *cfg.sequence, std::move(base), std::move(head)};
    finish(run_training(model, train_set, eval_set, tc, cfg.out_dir, "model", g, out));
    return kOk;
  }

  auto [train_set, eval_set] = load_tabular(cfg.data);
  manifest["records"] = {{"train", train_set.size()}, {"eval", eval_set.size()}};
  Rng baseline_init = init_rng;
  CtrModel model{cfg.model, init_params(cfg.model, init_rng)};
  const TrainRun run = run_training(model, train_set, eval_set, tc, cfg.out_dir, "model", g, out);
  if (baseline) {
    ModelConfig dot_cfg = cfg.model;
    dot_cfg.interaction = InteractionKind::dot;
    CtrModel dot{dot_cfg, init_params(dot_cfg, baseline_init)};
    json summary = run_summary(run_training(dot, train_set, eval_set, tc, cfg.out_dir, "baseline_dot", g, out));
    summary["interaction"] = "dot";
    manifest["baseline"] = summary;
  }
  finish(run);
  return kOk;
}

int cmd_eval(const std::string& model_path, const std::string& data, std::ostream& out) {
  LoadedModel loaded = load_model(model_path);
  DatasetSpec spec = parse_dataset_spec(data);
  MetricsReport report;
  if (auto* m = std::get_if<CtrModel>(&loaded)) {
    spec.hash_sizes = m->config.table_sizes;
    report = evaluate(*m, load_records(spec));
  } else {
    auto& s = std::get<SequentialModel>(loaded);
    spec.hash_sizes = s.base_config.table_sizes;
    report = evaluate(s, load_sequences(spec).records);
  }
  out << format_metrics_line(report) << "\n";
  return kOk;
}

Record parse_input_line(const std::string& line, DataFormat format, const ModelConfig& cfg) {
  switch (format) {
    case DataFormat::criteo:
      return parse_criteo_line(line, cfg.table_sizes, 1);
    case DataFormat::avazu:
      return parse_avazu_line(line, cfg.table_sizes, 1);
    case DataFormat::indexed:
      return parse_indexed_line(line, cfg.n_dense, cfg.n_sparse, 1);
    case DataFormat::synthetic:
    case DataFormat::taobao:
      break;
  }
  throw ConfigError("format", "dump-attention reads criteo, avazu or indexed lines");
}

int cmd_dump_attention(const std::string& model_path, const std::string& input, const std::string& format,
                       const std::string& out_path, std::ostream& out, const GlobalOptions& g) {
  LoadedModel loaded = load_model(model_path);
  const RecModelParams* params = nullptr;
  const ModelConfig* cfg = nullptr;
  if (auto* m = std::get_if<CtrModel>(&loaded)) {
    params = &m->params;
    cfg = &m->config;
  } else {
    auto& s = std::get<SequentialModel>(loaded);
    params = &s.base;
    cfg = &s.base_config;
  }
  if (cfg->interaction != InteractionKind::trec) {
    throw ConfigError("interaction", "attention dumps need a trec model, this one uses " +
                                         std::string(to_string(cfg->interaction)));
  }
  const Record record = parse_input_line(input, parse_data_format(format), *cfg);
  FeatureBatch batch;
  batch.append(record.dense, record.sparse);
  Tape tape(Tape::Mode::inference);
  Rng unused(0);
  AttentionTrace trace;
  forward_ctr(tape, *params, *cfg, batch, Phase::eval, unused, &trace);

  AttentionDump dump;
  dump.feature_labels = feature_labels(cfg->n_sparse);
  dump.heads = std::move(trace.heads);
  write_file(out_path, serialize_attention_dump(dump));
  if (!g.quiet) out << "wrote " << dump.heads.size() << " attention heads to " << out_path << "\n";
  return kOk;
}

int cmd_export_pca(const std::string& model_path, const std::string& data, const std::string& user,
                   const std::string& out_path, std::ostream& out, const GlobalOptions& g) {
  LoadedModel loaded = load_model(model_path);
  auto* model = std::get_if<SequentialModel>(&loaded);
  if (model == nullptr) throw ConfigError("model", "export-pca needs a sequential model");
  DatasetSpec spec = parse_dataset_spec(data);
  spec.hash_sizes = model->base_config.table_sizes;
  const TaobaoData sequences = load_sequences(spec);

  const SequenceRecord* chosen = nullptr;
  for (const auto& r : sequences.records) {
    if (r.user == user && r.label == 1) chosen = &r;
  }
  if (chosen == nullptr) throw ConfigError("user", "no complete sequence for user '" + user + "'");

  FeatureBatch events;
  for (const Event& e : chosen->history) events.append(e.dense, e.sparse);
  events.append(chosen->candidate.dense, chosen->candidate.sparse);
  Tape tape(Tape::Mode::inference);
  Rng unused(0);
  const Tensor z = event_embeddings(tape, model->base, model->base_config, events, Phase::eval, unused);
  const std::size_t width = z.dim(1);
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < z.dim(0); ++i) {
    auto d = z.data().subspan(i * width, width);
    rows.emplace_back(d.begin(), d.end());
  }
  const PcaResult p = pca(rows, 2);

  std::ostringstream csv;
  char buf[160];
  std::snprintf(buf, sizeof buf, "# explained_variance pc1=%.17g pc2=%.17g total=%.17g\n", p.explained_variance[0],
                p.explained_variance[1], p.total_variance);
  csv << buf << "index,kind,pc1,pc2\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%s,%.17g,%.17g\n", i, i + 1 == rows.size() ? "candidate" : "history",
                  p.projections[i][0], p.projections[i][1]);
    csv << buf;
  }
  write_file(out_path, csv.str());
  if (!g.quiet) out << "wrote " << rows.size() << " projected embeddings to " << out_path << "\n";
  return kOk;
}

int cmd_gradcheck(const std::string& config_path, double eps, double tol, std::size_t batch_size,
                  const GlobalOptions& g, std::ostream& out) {
  RunConfig cfg = load_run_config(config_path, false);
  if (g.seed) cfg.train.seed = *g.seed;
  // Finite differences need a deterministic loss.
  cfg.model.dropout_p = 0.0;
  if (batch_size == 0) throw ConfigError("batch", "must be positive");

  Rng rng(cfg.train.seed);
  const ModelConfig& m = cfg.model;
  auto random_event = [&]() {
    Event e;
    for (std::size_t i = 0; i < m.n_dense; ++i) e.dense.push_back(rng.uniform01());
    for (std::size_t i = 0; i < m.n_sparse; ++i) {
      e.sparse.push_back(static_cast<std::int64_t>(rng.uniform_index(m.table_sizes[i])));
    }
    return e;
  };

  std::vector<NamedTensor> params;
  std::function<Tensor(Tape&)> loss;
  std::optional<CtrModel> ctr;
  std::optional<SequentialModel> seq;
  if (cfg.sequence) {
    // Toy sequences of three events: two history entries plus the candidate.
    std::vector<SequenceRecord> records(batch_size);
    for (std::size_t b = 0; b < batch_size; ++b) {
      records[b].history = {random_event(), random_event()};
      records[b].candidate = random_event();
      records[b].label = static_cast<int>(b % 2);
    }
    std::vector<const SequenceRecord*> ptrs;
    for (const auto& r : records) ptrs.push_back(&r);
    auto batch = std::make_shared<SequenceBatch>(make_sequence_batch(ptrs));
    RecModelParams base = init_params(m, rng);
    SequenceParams head = init_sequence_params(m, *cfg.sequence, rng);
    seq.emplace(SequentialModel{m, *cfg.sequence, std::move(base), std::move(head)});
    params = seq->parameters();
    loss = [&seq, batch](Tape& tape) {
      Rng unused(0);
      return bce_loss(tape, seq->forward(tape, *batch, Phase::train, unused), batch->labels);
    };
  } else {
    auto batch = std::make_shared<Batch>();
    for (std::size_t b = 0; b < batch_size; ++b) {
      const Event e = random_event();
      batch->features.append(e.dense, e.sparse);
      batch->labels.push_back(static_cast<double>(b % 2));
    }
    ctr.emplace(CtrModel{m, init_params(m, rng)});
    params = ctr->parameters();
    loss = [&ctr, batch](Tape& tape) {
      Rng unused(0);
      return bce_loss(tape, ctr->forward(tape, *batch, Phase::train, unused), batch->labels);
    };
  }

  const GradCheckReport report = check_gradients(params, loss, eps);
  std::vector<std::string> failing;
  char buf[256];
  for (const auto& t : report.tensors) {
    const bool ok = t.worst_relative_error < tol;
    if (!ok) failing.push_back(t.name);
    if (!g.quiet || !ok) {
      std::snprintf(buf, sizeof buf, "%-28s size=%-6zu worst_rel_err=%.3e at=%zu analytic=%.6e numeric=%.6e %s\n",
                    t.name.c_str(), t.size, t.worst_relative_error, t.worst_index, t.analytic, t.numeric,
                    ok ? "PASS" : "FAIL");
      out << buf;
    }
  }
  std::snprintf(buf, sizeof buf, "%.3e", report.worst());
  if (failing.empty()) {
    out << "gradcheck PASS: " << report.tensors.size() << " tensors, worst relative error " << buf << " < " << tol
        << "\n";
    return kOk;
  }
  std::string names;
  for (const auto& n : failing) names += (names.empty() ? "" : ", ") + n;
  throw VerificationFailure("gradcheck FAIL: " + names);
}

}  // namespace

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 256 << 20);
#endif
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Masked-attention recommendation models: train, evaluate, inspect."};
  app.name("maskrec");
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--seed", g.seed, "Override the run seed");
  app.add_flag("--quiet", g.quiet, "Suppress progress output");
  app.add_flag("--deterministic", g.deterministic, "Write wall_ms as 0 so metrics files are byte-reproducible");

  std::string config, model, data, input, format = "criteo", out_path, user;
  std::optional<double> target_auc;
  std::optional<std::size_t> max_iters;
  std::optional<std::string> out_dir;
  bool baseline = false;
  double eps = 1e-5, tol = 1e-4;
  std::size_t batch = 4;

  auto* train_cmd = app.add_subcommand("train", "Train a model from a config file")->fallthrough();
  train_cmd->add_option("--config", config, "INI run config")->required();
  train_cmd->add_option("--target-auc", target_auc, "Stop once eval AUC reaches this value");
  train_cmd->add_option("--max-iters", max_iters, "Iteration budget");
  train_cmd->add_option("--out-dir", out_dir, "Artifact directory");
  train_cmd->add_flag("--baseline", baseline, "Also train the dot-product baseline on the same budget");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a saved model")->fallthrough();
  eval_cmd->add_option("--model", model, "Model file")->required();
  eval_cmd->add_option("--data", data, "Data spec, e.g. synthetic:n=1000,seed=2 or criteo:PATH")->required();

  auto* dump_cmd = app.add_subcommand("dump-attention", "Write per-head attention matrices for one input")->fallthrough();
  dump_cmd->add_option("--model", model, "Model file")->required();
  dump_cmd->add_option("--input", input, "One data line")->required();
  dump_cmd->add_option("--format", format, "criteo, avazu or indexed");
  dump_cmd->add_option("--out", out_path, "Output JSON path")->required();

  auto* pca_cmd = app.add_subcommand("export-pca", "Project one user's sequence embeddings onto two components")
                      ->fallthrough();
  pca_cmd->add_option("--model", model, "Sequential model file")->required();
  pca_cmd->add_option("--data", data, "taobao:PATH[,seq_len=K][,seed=S]")->required();
  pca_cmd->add_option("--user", user, "User id")->required();
  pca_cmd->add_option("--out", out_path, "Output CSV path")->required();

  auto* grad_cmd = app.add_subcommand("gradcheck", "Compare backward against finite differences")->fallthrough();
  grad_cmd->add_option("--config", config, "INI run config")->required();
  grad_cmd->add_option("--eps", eps, "Finite-difference step");
  grad_cmd->add_option("--tol", tol, "Relative-error tolerance");
  grad_cmd->add_option("--batch", batch, "Batch size");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << "run with --help for usage\n";
    return kUsage;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(config, target_auc, max_iters, out_dir, baseline, g, out);
    if (eval_cmd->parsed()) return cmd_eval(model, data, out);
    if (dump_cmd->parsed()) return cmd_dump_attention(model, input, format, out_path, out, g);
    if (pca_cmd->parsed()) return cmd_export_pca(model, data, user, out_path, out, g);
    if (grad_cmd->parsed()) return cmd_gradcheck(config, eps, tol, batch, g, out);
  } catch (const TrainingAborted& e) {
    err << "error: training aborted: " << e.what() << "\n";
    return kNumericAbort;
  } catch (const NumericError& e) {
    err << "error: numeric failure: " << e.what() << "\n";
    return kNumericAbort;
  } catch (const VerificationFailure& e) {
    err << e.what() << "\n";
    return kVerificationFailed;
  } catch (const ConfigError& e) {
    err << "error: config: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}

}  // namespace maskrec::cli
