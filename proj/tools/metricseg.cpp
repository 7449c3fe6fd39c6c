#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "metricseg/metricseg.hpp"

namespace {

using namespace metricseg;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::size_t count = 1;
  std::string scenes;
  std::string checkpoint;
  std::string resume;
  std::string in;
  std::string pred;
  std::string gt;
  std::optional<std::uint64_t> steps;
};

PipelineConfig load(const Options& o) {
  PipelineConfig c = o.config.empty() ? PipelineConfig{} : load_config(o.config);
  if (o.seed) {
    c.seed = *o.seed;
    c.scene.seed = *o.seed;
  }
  if (o.steps) c.training.steps = *o.steps;
  c.validate();
  return c;
}

int run_gen(const Options& o) {
  const auto files = cmd_gen(load(o), o.count, o.out);
  std::printf("wrote %zu scenes to %s\n", files.size(), o.out.c_str());
  return 0;
}

int run_train(const Options& o) {
  const PipelineConfig c = load(o);
  const std::uint64_t every = c.training.log_every;
  cmd_train(
      c, o.scenes, o.out,
      [every](const StepStats& s) {
        if (every > 0 && s.step % every == 0) {
          std::printf("step %llu lr %.6g semantic %.6f metric %.6f\n", static_cast<unsigned long long>(s.step), s.lr,
                      s.semantic_loss, s.metric_loss);
          std::fflush(stdout);
        }
      },
      o.resume);
  std::printf("checkpoint %s\n", o.out.c_str());
  return 0;
}

int run_segment(const Options& o) {
  const Segmentation seg = cmd_segment(load(o), o.checkpoint, o.in, o.out);
  std::printf("%zu instances -> %s\n", seg.instances.size(), o.out.c_str());
  return 0;
}

int run_eval(const Options& o) {
  const EvalResult r = cmd_eval(o.pred, o.gt, o.out);
  std::fputs(format_report_table(r.aggregate).c_str(), stdout);
  return 0;
}

int run_bench(const Options& o) {
  const std::string report = cmd_bench(load(o), o.checkpoint);
  if (o.out.empty()) {
    std::fputs(report.c_str(), stdout);
  } else {
    write_text_file(o.out, report);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"metricseg: voxel embedding instance segmentation"};
  app.require_subcommand(1);
  Options o;

  auto common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config, "flat key=value config file (defaults if omitted)");
    sub->add_option("--seed", o.seed, "override the config seed");
  };

  CLI::App* gen = app.add_subcommand("gen", "generate synthetic scenes");
  common(gen);
  gen->add_option("--out", o.out, "output directory")->required();
  gen->add_option("--count", o.count, "number of scenes")->check(CLI::NonNegativeNumber);

  CLI::App* train = app.add_subcommand("train", "train the embedding network");
  common(train);
  train->add_option("--scenes", o.scenes, "directory of training scenes")->required();
  train->add_option("--out", o.out, "checkpoint to write")->required();
  train->add_option("--resume", o.resume, "checkpoint to continue from");
  train->add_option("--steps", o.steps, "override the configured step count");

  CLI::App* segment = app.add_subcommand("segment", "segment one scene");
  common(segment);
  segment->add_option("--checkpoint", o.checkpoint, "trained checkpoint")->required();
  segment->add_option("--in", o.in, "input scene")->required();
  segment->add_option("--out", o.out, "labeled output scene")->required();

  CLI::App* eval = app.add_subcommand("eval", "score predictions against ground truth");
  common(eval);
  eval->add_option("--pred", o.pred, "directory of predicted scenes")->required();
  eval->add_option("--gt", o.gt, "directory of ground-truth scenes")->required();
  eval->add_option("--out", o.out, "report directory")->required();

  CLI::App* bench = app.add_subcommand("bench", "time the pipeline stages");
  common(bench);
  bench->add_option("--checkpoint", o.checkpoint, "checkpoint (fresh model if omitted)");
  bench->add_option("--out", o.out, "report file (stdout if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return run_gen(o);
    if (train->parsed()) return run_train(o);
    if (segment->parsed()) return run_segment(o);
    if (eval->parsed()) return run_eval(o);
    if (bench->parsed()) return run_bench(o);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
