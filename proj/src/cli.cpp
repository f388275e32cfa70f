#include "mixtea/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "mixtea/checkpoint.hpp"
#include "mixtea/eval.hpp"
#include "mixtea/kg.hpp"
#include "mixtea/pseudo_map.hpp"
#include "mixtea/synthetic.hpp"

namespace mixtea {

namespace {

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void apply_ablation_names(const std::vector<std::string>& names, Ablations& ablations) {
  for (const auto& name : names) {
    if (name == "no_rel") ablations.no_rel = true;
    else if (name == "no_lu") ablations.no_lu = true;
    else if (name == "no_bdv") ablations.no_bdv = true;
    else if (name == "no_mdr") ablations.no_mdr = true;
    else if (name == "no_bm") ablations.no_bdv = ablations.no_mdr = true;
    else throw UsageError("unknown ablation: " + name);
  }
}

// Replaces `--config FILE` with the file's entries as leading `--key value`
// pairs, so later command-line flags take precedence.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> from_file, rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string path;
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw UsageError("--config needs a file name");
      path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
      continue;
    }
    if (!std::filesystem::is_regular_file(path)) throw UsageError("config file not found: " + path);
    for (const auto& item : CLI::ConfigTOML().from_file(path)) {
      if (item.name == "++" || item.name == "--") continue;
      if (!item.parents.empty() && !(item.parents.size() == 1 && item.parents[0] == "train")) {
        throw UsageError("unexpected config section in " + path + ": " + item.fullname());
      }
      from_file.push_back("--" + item.name);
      from_file.insert(from_file.end(), item.inputs.begin(), item.inputs.end());
    }
  }
  if (from_file.empty()) return args;
  // subcommand name stays first
  std::vector<std::string> out{rest.front()};
  out.insert(out.end(), from_file.begin(), from_file.end());
  out.insert(out.end(), rest.begin() + 1, rest.end());
  return out;
}

struct TrainArgs {
  RunConfig run;
  std::string mode = "mixtea";
  std::vector<std::string> ablate;
  bool quiet = false;
};

void add_train_options(CLI::App& cmd, TrainArgs& a) {
  auto& r = a.run;
  auto& t = r.train;
  auto& e = r.encoder;
  cmd.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  cmd.add_option("--config", "key = value configuration file; flags override it");
  cmd.add_option("--dataset_dir,--dataset-dir,--dataset", r.dataset_dir, "OpenEA-layout dataset directory")
      ->required();
  cmd.add_option("--fold", r.fold, "fold under 721_5fold/");
  cmd.add_option("--output_dir,--output-dir,--out", r.output_dir, "directory for run artifacts");
  cmd.add_option("--mode", a.mode, "mixtea | supervised_only | self_training_baseline");
  cmd.add_option("--entity_dim,--entity-dim", e.entity_dim);
  cmd.add_option("--relation_dim,--relation-dim", e.relation_dim);
  cmd.add_option("--layers", e.layers, "number of GAT layers");
  cmd.add_option("--margin", t.margin);
  cmd.add_option("--momentum", t.momentum, "teacher EMA momentum");
  cmd.add_option("--neg_samples,--neg-samples", t.neg_samples);
  cmd.add_option("--lambda_max,--lambda-max", t.lambda_max);
  cmd.add_option("--ramp_epochs,--ramp-epochs", t.ramp_epochs);
  cmd.add_option("--epochs", t.epochs);
  cmd.add_option("--lr", t.lr);
  cmd.add_option("--seed", t.seed);
  cmd.add_option("--validation_interval,--validation-interval", t.validation_interval);
  cmd.add_option("--neg_refresh_interval,--neg-refresh-interval", t.neg_refresh_interval);
  cmd.add_option("--pseudo_interval,--pseudo-interval", t.pseudo_interval);
  cmd.add_option("--student_temperature,--student-temperature", t.student_temperature);
  cmd.add_option("--target_temperature,--target-temperature", t.target_temperature);
  cmd.add_option("--threshold", t.self_training_threshold, "self-training baseline threshold");
  cmd.add_option("--patience", t.patience, "early stopping patience in validations (0 = off)");
  cmd.add_option("--no_rel,--no-rel", t.ablations.no_rel);
  cmd.add_option("--no_lu,--no-lu", t.ablations.no_lu);
  cmd.add_option("--no_bdv,--no-bdv", t.ablations.no_bdv);
  cmd.add_option("--no_mdr,--no-mdr", t.ablations.no_mdr);
  cmd.add_option("--ablate", a.ablate, "no_rel | no_lu | no_bdv | no_mdr | no_bm (repeatable)")
      ->delimiter(',');
  cmd.add_option("--dump_pseudo,--dump-pseudo", r.dump_pseudo, "write teacher pseudo-mapping matrices");
  cmd.add_flag("--quiet", a.quiet, "suppress per-validation progress lines");
}

int cmd_train(TrainArgs& a, std::ostream& out) {
  auto& run = a.run;
  try {
    run.train.mode = parse_mode(a.mode);
    apply_ablation_names(a.ablate, run.train.ablations);
    run.encoder.validate();
    run.train.validate();
  } catch (const std::invalid_argument& ex) {
    throw UsageError(ex.what());
  }

  const auto dataset = build_dataset(run.dataset_dir, run.fold);
  std::filesystem::create_directories(run.output_dir);
  write_file(run.output_dir / "run_manifest", format_manifest(run));

  EpochCallback progress;
  if (!a.quiet) {
    progress = [&out, &run](const EpochRecord& r) {
      const auto interval = run.train.validation_interval;
      if (interval == 0 || (r.epoch + 1) % interval != 0) return;
      char line[160];
      std::snprintf(line, sizeof line,
                    "epoch %4zu  loss_a %.4f  loss_u %.4f  lambda %.4f  beta %.3f  valid@1 st %.4f ts %.4f\n",
                    r.epoch + 1, r.loss_a, r.loss_u, r.lambda, r.beta, r.valid_hit1_st,
                    r.valid_hit1_ts);
      out << line;
    };
  }
  const auto result = train(dataset, run.encoder, run.train, progress);

  write_file(run.output_dir / "metrics.csv", format_metrics_csv(result.history));
  save_checkpoint(run.output_dir / "checkpoint", {result.encoder, result.student});
  if (run.dump_pseudo && !result.last_pseudo.empty()) {
    std::ofstream p(run.output_dir / "pseudo_mappings.tsv");
    write_pseudo_dump(p, result.last_pseudo);
    std::ofstream q(run.output_dir / "pseudo_mappings_rectified.tsv");
    write_pseudo_dump(q, result.last_rectified);
  }

  const Tensor emb = encode(result.student, result.encoder, dataset.index);
  std::vector<MetricsReport> reports;
  for (auto dir : {Direction::source_to_target, Direction::target_to_source}) {
    reports.push_back(evaluate_embeddings(emb, dataset, Split::test, dir));
  }
  std::string report = format_report_table(reports);
  for (const auto& r : reports) report += format_report_line(r) + "\n";
  write_file(run.output_dir / "report.txt", report);
  out << report;
  return kExitOk;
}

struct EvalArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path dataset_dir;
  int fold = 1;
  std::string split = "test";
  std::string direction = "st";
  std::filesystem::path report;
  std::filesystem::path ranking_dump;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  Split split;
  Direction direction;
  try {
    split = parse_split(a.split);
    direction = parse_direction(a.direction);
  } catch (const std::invalid_argument& ex) {
    throw UsageError(ex.what());
  }
  const auto ck = load_checkpoint(a.checkpoint);
  const auto dataset = build_dataset(a.dataset_dir, a.fold);
  validate_params(ck.params, ck.encoder, dataset.index.entity_count, dataset.relation_count());
  const Tensor emb = encode(ck.params, ck.encoder, dataset.index);

  MetricsReport report;
  if (!a.ranking_dump.empty()) {
    const auto ranked = rank_split(emb, dataset, mappings_for(dataset, split), direction, 10);
    std::ofstream dump(a.ranking_dump);
    if (!dump) throw std::runtime_error("cannot write " + a.ranking_dump.string());
    write_ranking_dump(dump, ranked);
  }
  report = evaluate_embeddings(emb, dataset, split, direction);
  const std::vector<MetricsReport> reports{report};
  const auto text = format_report_table(reports) + format_report_line(report) + "\n";
  out << text;
  if (!a.report.empty()) write_file(a.report, text);
  return kExitOk;
}

}  // namespace

std::string format_manifest(const RunConfig& c) {
  const auto& t = c.train;
  const auto& e = c.encoder;
  auto flag = [](bool b) { return b ? "true" : "false"; };
  std::ostringstream os;
  os << "# effective configuration; rerun with: mixtea train --config <this file>\n";
  os << "dataset_dir = \"" << c.dataset_dir.string() << "\"\n";
  os << "fold = " << c.fold << '\n';
  os << "output_dir = \"" << c.output_dir.string() << "\"\n";
  os << "mode = " << to_string(t.mode) << '\n';
  os << "entity_dim = " << e.entity_dim << '\n';
  os << "relation_dim = " << e.relation_dim << '\n';
  os << "layers = " << e.layers << '\n';
  os << "margin = " << fmt_double(t.margin) << '\n';
  os << "momentum = " << fmt_double(t.momentum) << '\n';
  os << "neg_samples = " << t.neg_samples << '\n';
  os << "lambda_max = " << fmt_double(t.lambda_max) << '\n';
  os << "ramp_epochs = " << t.ramp_epochs << '\n';
  os << "epochs = " << t.epochs << '\n';
  os << "lr = " << fmt_double(t.lr) << '\n';
  os << "seed = " << t.seed << '\n';
  os << "validation_interval = " << t.validation_interval << '\n';
  os << "neg_refresh_interval = " << t.neg_refresh_interval << '\n';
  os << "pseudo_interval = " << t.pseudo_interval << '\n';
  os << "student_temperature = " << fmt_double(t.student_temperature) << '\n';
  os << "target_temperature = " << fmt_double(t.target_temperature) << '\n';
  os << "threshold = " << fmt_double(t.self_training_threshold) << '\n';
  os << "patience = " << t.patience << '\n';
  os << "no_rel = " << flag(t.ablations.no_rel) << '\n';
  os << "no_lu = " << flag(t.ablations.no_lu) << '\n';
  os << "no_bdv = " << flag(t.ablations.no_bdv) << '\n';
  os << "no_mdr = " << flag(t.ablations.no_mdr) << '\n';
  os << "dump_pseudo = " << flag(c.dump_pseudo) << '\n';
  return os.str();
}

std::string format_metrics_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream os;
  os << "epoch,loss_a,loss_u,lambda,beta,valid_hit1_st,valid_hit1_ts\n";
  char line[256];
  for (const auto& r : history) {
    std::snprintf(line, sizeof line, "%zu,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n", r.epoch, r.loss_a,
                  r.loss_u, r.lambda, r.beta, r.valid_hit1_st, r.valid_hit1_ts);
    os << line;
  }
  return os.str();
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Semi-supervised entity alignment with teacher-student mixture training"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train an encoder and write run artifacts");
  add_train_options(*train_cmd, train_args);

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint)->required();
  eval_cmd->add_option("--dataset_dir,--dataset-dir,--dataset", eval_args.dataset_dir)->required();
  eval_cmd->add_option("--fold", eval_args.fold);
  eval_cmd->add_option("--split", eval_args.split, "train | valid | test");
  eval_cmd->add_option("--direction", eval_args.direction, "st | ts");
  eval_cmd->add_option("--report", eval_args.report, "also write the report to this file");
  eval_cmd->add_option("--ranking_dump,--ranking-dump", eval_args.ranking_dump,
                       "write per-query ranks and top-10 candidates");

  SyntheticOptions synth;
  std::filesystem::path synth_out;
  auto* gen_cmd = app.add_subcommand("gen-synthetic", "write an isomorphic synthetic KG pair");
  gen_cmd->add_option("--entities,--n_entities", synth.entities);
  gen_cmd->add_option("--relations,--n_relations", synth.relations);
  gen_cmd->add_option("--avg_degree,--avg-degree", synth.avg_degree);
  gen_cmd->add_option("--seed", synth.seed);
  gen_cmd->add_option("--train_ratio,--train-ratio", synth.train_ratio);
  gen_cmd->add_option("--valid_ratio,--valid-ratio", synth.valid_ratio);
  gen_cmd->add_option("--folds", synth.folds);
  gen_cmd->add_option("--out,--out_dir,--out-dir", synth_out)->required();

  std::vector<std::string> argv_storage{"mixtea"};
  try {
    const auto expanded = !args.empty() && args.front() == "train" ? expand_config(args) : args;
    argv_storage.insert(argv_storage.end(), expanded.begin(), expanded.end());
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  }
  std::vector<char*> argv;
  for (auto& s : argv_storage) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(train_args, out);
    if (eval_cmd->parsed()) return cmd_eval(eval_args, out);
    if (gen_cmd->parsed()) {
      try {
        generate_synthetic(synth, synth_out);
      } catch (const std::invalid_argument& ex) {
        throw UsageError(ex.what());
      }
      out << "wrote synthetic dataset to " << synth_out.string() << '\n';
      return kExitOk;
    }
  } catch (const UsageError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace mixtea
