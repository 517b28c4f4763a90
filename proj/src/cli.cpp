#include "confnet2seq/cli.hpp"

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "confnet2seq/checkpoint.hpp"
#include "confnet2seq/confnet.hpp"
#include "confnet2seq/data.hpp"
#include "confnet2seq/errors.hpp"
#include "confnet2seq/eval.hpp"
#include "confnet2seq/model.hpp"
#include "confnet2seq/text.hpp"
#include "confnet2seq/train.hpp"

namespace confnet2seq::cli {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::vector<confnet::ConfusionNetwork> read_networks(const std::string& path, const confnet::ParseOptions& opts) {
  const std::string body = read_file(path);
  const auto first = body.find_first_not_of(" \t\r\n");
  try {
    if (first != std::string::npos && (body[first] == '{' || body[first] == '[')) {
      auto nets = confnet::parse_json_networks(body);
      for (auto& n : nets) n = confnet::apply_limits(n, opts);
      return nets;
    }
    return confnet::parse_sausage(body, opts);
  } catch (const Error& e) {
    throw FormatError(path + ": " + e.what());
  }
}

// Writes to `path`, or to `out` when the path is empty or "-".
class Sink {
 public:
  Sink(const std::string& path, std::ostream& out) {
    if (path.empty() || path == "-") {
      stream_ = &out;
    } else {
      file_.open(path, std::ios::binary);
      if (!file_) throw DataError("cannot write " + path);
      stream_ = &file_;
    }
  }
  std::ostream& get() { return *stream_; }

 private:
  std::ofstream file_;
  std::ostream* stream_ = nullptr;
};

struct ConfnetArgs {
  std::string input;
  std::string output;
  std::string to = "json";
  std::size_t max_arcs = 20;
  std::size_t max_bins = 50;
  bool drop_noise_arcs = false;
  std::vector<std::string> extra_noise;
};

void cmd_confnet(const std::string& sub, const ConfnetArgs& a, std::ostream& out, std::ostream& err) {
  const confnet::ParseOptions opts{a.max_arcs, a.max_bins};
  const auto nets = read_networks(a.input, opts);
  Sink sink(a.output, out);
  std::ostream& os = sink.get();
  if (sub == "prune") {
    confnet::NoiseLexicon noise = confnet::NoiseLexicon::defaults();
    for (const auto& t : a.extra_noise) noise.add(t);
    for (const auto& net : nets) {
      const auto result = confnet::prune_noise(confnet::normalize(net), noise, {a.drop_noise_arcs});
      if (result.emptied) err << "warning: network '" << net.id << "' is empty after pruning\n";
      confnet::write_sausage(os, result.network);
    }
  } else if (sub == "best") {
    for (const auto& net : nets) os << text::join(confnet::best_hypothesis(net)) << '\n';
  } else if (sub == "stats") {
    nlohmann::json report = nlohmann::json::array();
    for (const auto& net : nets) {
      nlohmann::json j = confnet::stats(net).to_json();
      j["id"] = net.id;
      report.push_back(std::move(j));
    }
    os << report.dump(2) << '\n';
  } else if (sub == "convert") {
    if (a.to == "json") {
      for (const auto& net : nets) os << confnet::to_json(net).dump() << '\n';
    } else {
      os << confnet::to_sausage(nets);
    }
  }
}

struct TrainArgs {
  std::string config;
  std::string resume;
  std::optional<std::size_t> steps;
  std::optional<std::uint64_t> seed;
  std::string checkpoint_dir;
};

void cmd_train(const TrainArgs& a, std::ostream& out) {
  train::RunConfig config = train::RunConfig::load(a.config);
  train::apply_seed_override(config);
  if (a.seed) config.seed = *a.seed;
  if (a.steps) config.steps = *a.steps;
  if (!a.checkpoint_dir.empty()) config.checkpoint_dir = a.checkpoint_dir;
  if (config.checkpoint_dir.empty()) throw ContractError("train needs a checkpoint_dir (config or --checkpoint-dir)");
  config.validate();

  train::Trainer trainer = a.resume.empty() ? train::Trainer::from_config(config) : train::Trainer::resume(config, a.resume);
  std::filesystem::create_directories(config.checkpoint_dir);
  const auto log_path = config.log_path.empty() ? config.checkpoint_dir / "train_log.jsonl" : config.log_path;
  std::ofstream log(log_path, a.resume.empty() ? std::ios::trunc : std::ios::app);
  if (!log) throw DataError("cannot write " + log_path.string());
  const auto records = trainer.run(&log);
  out << "trained " << records.size() << " steps on " << trainer.dataset().size() << " samples ("
      << trainer.dataset().rejected.size() << " rejected)";
  if (!records.empty()) out << ", final loss " << records.back().loss;
  out << "\ncheckpoint: " << (config.checkpoint_dir / "latest").string() << '\n';
}

struct GenerateArgs {
  std::string checkpoint;
  std::string input;
  std::string output;
  std::string mode = "clean";
  bool greedy = false;
  std::size_t beam = 5;
  std::size_t max_length = 50;
  std::vector<std::string> extra_noise;
};

void cmd_generate(const GenerateArgs& a, std::ostream& out, std::ostream& err) {
  if (a.beam == 0) throw ContractError("--beam must be >= 1");
  if (a.max_length == 0 || a.max_length > 50) throw ContractError("--max-length must lie in 1..50");
  const num::Checkpoint ck = num::load_checkpoint(a.checkpoint);
  const model::Model model = model::Model::from_checkpoint(ck);
  data::LoadOptions opts;
  opts.mode = data::parse_input_mode(a.mode);
  opts.require_answer = false;
  opts.max_length = model.config().max_length;
  opts.parse.max_arcs = model.config().max_arcs;
  opts.parse.max_bins = model.config().max_bins;
  // Noise tokens the model was trained with, then any given here.
  if (ck.config.contains("run") && ck.config["run"].contains("noise"))
    for (const auto& t : ck.config["run"]["noise"]) opts.noise.add(t.get<std::string>());
  for (const auto& t : a.extra_noise) opts.noise.add(t);

  std::ifstream in(a.input);
  if (!in) throw DataError("cannot read " + a.input);
  const auto base_dir = std::filesystem::path(a.input).parent_path();
  Sink sink(a.output, out);
  std::string line;
  std::size_t lineno = 0;
  // Lines are handled one at a time so output stays aligned with input even
  // when a sample is rejected.
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream one(line);
    data::Dataset ds = data::load_corpus(one, base_dir, opts);
    if (ds.empty()) {
      const auto& r = ds.rejected.front();
      err << "warning: line " << lineno << " ('" << r.id << "') rejected: " << r.reason << '\n';
      sink.get() << '\n';
      continue;
    }
    const data::Sample& s = ds.samples.front();
    const model::Hypothesis hyp = a.greedy ? model.greedy_decode(s.question_net, s.factoid_answer, a.max_length)
                                           : model.beam_decode(s.question_net, s.factoid_answer, a.beam, a.max_length);
    sink.get() << text::join(hyp.tokens) << '\n';
  }
}

struct EvalArgs {
  std::string predictions;
  std::string references;
  std::string output;
};

void cmd_eval(const EvalArgs& a, std::ostream& out) {
  const auto pred = read_lines(a.predictions);
  const auto ref = read_lines(a.references);
  if (pred.size() != ref.size())
    throw DataError(a.predictions + " has " + std::to_string(pred.size()) + " lines but " + a.references + " has " +
                    std::to_string(ref.size()));
  const eval::MetricReport report = eval::evaluate_lines(pred, ref);
  out << report.to_text();
  const std::string json_path = a.output.empty() ? a.predictions + ".metrics.json" : a.output;
  std::ofstream js(json_path);
  if (!js) throw DataError("cannot write " + json_path);
  js << report.to_json().dump(2) << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Answer generation from spoken-question confusion networks"};
  app.name("confnet2seq");
  app.require_subcommand(1);

  auto* confnet_cmd = app.add_subcommand("confnet", "Confusion-network utilities");
  confnet_cmd->require_subcommand(1);
  ConfnetArgs cn;
  std::string confnet_sub;
  for (const char* name : {"prune", "best", "stats", "convert"}) {
    auto* sub = confnet_cmd->add_subcommand(name, "");
    sub->add_option("input", cn.input, "Sausage or JSON file")->required()->check(CLI::ExistingFile);
    sub->add_option("-o,--output", cn.output, "Output file (default stdout)");
    sub->add_option("--max-arcs", cn.max_arcs, "Arcs kept per bin (0 = all)")->capture_default_str();
    sub->add_option("--max-bins", cn.max_bins, "Bins kept per network (0 = all)")->capture_default_str();
    sub->callback([&confnet_sub, name] { confnet_sub = name; });
    if (std::string(name) == "prune") {
      sub->description("Remove bins made only of noise tokens and renormalize");
      sub->add_flag("--drop-noise-arcs", cn.drop_noise_arcs, "Also strip noise arcs from surviving bins");
      sub->add_option("--noise", cn.extra_noise, "Additional noise tokens");
    } else if (std::string(name) == "best") {
      sub->description("Print the 1-best transcript of each network");
    } else if (std::string(name) == "stats") {
      sub->description("Print bin statistics as JSON");
    } else {
      sub->description("Translate between sausage and JSON");
      sub->add_option("--to", cn.to, "Target format")->check(CLI::IsMember({"json", "sausage"}))->capture_default_str();
    }
  }

  auto* train_cmd = app.add_subcommand("train", "Train a model from a JSON run config");
  TrainArgs tr;
  train_cmd->add_option("-c,--config", tr.config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--resume", tr.resume, "Checkpoint prefix to continue from");
  train_cmd->add_option("--steps", tr.steps, "Total number of updates");
  train_cmd->add_option("--seed", tr.seed, "Random seed");
  train_cmd->add_option("--checkpoint-dir", tr.checkpoint_dir, "Checkpoint directory");

  auto* gen_cmd = app.add_subcommand("generate", "Generate full-length answers");
  GenerateArgs gen;
  gen_cmd->add_option("--checkpoint", gen.checkpoint, "Checkpoint prefix")->required();
  gen_cmd->add_option("-i,--input", gen.input, "Input manifest (JSON lines)")->required()->check(CLI::ExistingFile);
  gen_cmd->add_option("-o,--output", gen.output, "Output file (default stdout)");
  gen_cmd->add_option("--mode", gen.mode, "Question representation")
      ->check(CLI::IsMember({"clean", "raw", "best-hyp"}))
      ->capture_default_str();
  auto* greedy = gen_cmd->add_flag("--greedy", gen.greedy, "Greedy decoding");
  gen_cmd->add_option("--beam", gen.beam, "Beam width")->capture_default_str()->excludes(greedy);
  gen_cmd->add_option("--max-length", gen.max_length, "Maximum output length")->capture_default_str();
  gen_cmd->add_option("--noise", gen.extra_noise, "Additional noise tokens for clean mode");

  auto* eval_cmd = app.add_subcommand("eval", "Score predictions against references");
  EvalArgs ev;
  eval_cmd->add_option("-p,--predictions", ev.predictions, "One prediction per line")->required();
  eval_cmd->add_option("-r,--references", ev.references, "One reference per line")->required();
  eval_cmd->add_option("-o,--output", ev.output, "JSON report path (default <predictions>.metrics.json)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (confnet_cmd->parsed())
      cmd_confnet(confnet_sub, cn, out, err);
    else if (train_cmd->parsed())
      cmd_train(tr, out);
    else if (gen_cmd->parsed())
      cmd_generate(gen, out, err);
    else if (eval_cmd->parsed())
      cmd_eval(ev, out);
    out.flush();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace confnet2seq::cli
