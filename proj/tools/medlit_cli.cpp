#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "medlit/classifier.hpp"
#include "medlit/embeddings.hpp"
#include "medlit/pipeline.hpp"
#include "medlit/tagger.hpp"

namespace {

using namespace medlit;

struct GradcheckOptions {
  std::uint64_t seed = 1;
  int instances = 20;
  double eps = 1e-5;
};

// Small random instances of each differentiable model; prints the worst
// relative error per suite. Returns false if any suite fails.
bool run_gradcheck(const GradcheckOptions& opt) {
  Rng rng(opt.seed);
  double blstm_worst = 0.0;
  std::string blstm_where;
  for (int i = 0; i < opt.instances; ++i) {
    const int d = 1 + static_cast<int>(rng.below(5));
    const int h = 1 + static_cast<int>(rng.below(6));
    const int n = 1 + static_cast<int>(rng.below(5));
    const TaggerParams params = init_params(opt.seed + static_cast<std::uint64_t>(i), d, h);
    Eigen::MatrixXd inputs(n, d);
    for (Eigen::Index r = 0; r < inputs.rows(); ++r) {
      for (Eigen::Index c = 0; c < inputs.cols(); ++c) inputs(r, c) = rng.uniform(-1.0, 1.0);
    }
    std::vector<TokenLabel> gold;
    for (int t = 0; t < n; ++t) gold.push_back(rng.below(2) ? TokenLabel::MT : TokenLabel::NA);
    const auto report = gradient_check(params, inputs, gold, opt.eps, 1e-4);
    if (report.max_rel_error >= blstm_worst) {
      blstm_worst = report.max_rel_error;
      blstm_where = report.worst_tensor;
    }
  }

  const std::size_t vocab = 8, dim = 4;
  Eigen::MatrixXd in = Eigen::MatrixXd::Zero(vocab, dim), out = Eigen::MatrixXd::Zero(vocab, dim);
  for (Eigen::Index r = 0; r < in.rows(); ++r) {
    for (Eigen::Index c = 0; c < in.cols(); ++c) {
      in(r, c) = rng.uniform(-0.5, 0.5);
      out(r, c) = rng.uniform(-0.5, 0.5);
    }
  }
  const std::vector<std::size_t> negatives = {2, 5, 7};
  const auto analytic = skipgram_pair_gradient(in, out, 0, 1, negatives);
  double sg_worst = 0.0;
  for (auto* m : {&in, &out}) {
    const Eigen::MatrixXd& g = m == &in ? analytic.input : analytic.output;
    for (Eigen::Index r = 0; r < m->rows(); ++r) {
      for (Eigen::Index c = 0; c < m->cols(); ++c) {
        const double saved = (*m)(r, c);
        (*m)(r, c) = saved + opt.eps;
        const double plus = skipgram_pair_loss(in, out, 0, 1, negatives);
        (*m)(r, c) = saved - opt.eps;
        const double minus = skipgram_pair_loss(in, out, 0, 1, negatives);
        (*m)(r, c) = saved;
        sg_worst = std::max(sg_worst, gradient_relative_error(g(r, c), (plus - minus) / (2 * opt.eps)));
      }
    }
  }

  std::vector<std::vector<double>> x;
  std::vector<KnowledgeLabel> y;
  for (int i = 0; i < 10; ++i) {
    x.push_back({rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)});
    y.push_back(i % 2 ? KnowledgeLabel::HighMK : KnowledgeLabel::LowMK);
  }
  LogisticConfig cfg;
  cfg.epochs = 0;
  LogisticModel model = train_logistic(x, y, {"a", "b", "c"}, cfg);
  for (auto& w : model.weights) w = rng.uniform(-1, 1);
  model.bias = rng.uniform(-1, 1);
  const auto logit = gradient_check_logistic(model, x, y, opt.eps, cfg.l2_lambda);

  const bool blstm_ok = blstm_worst < 1e-4, sg_ok = sg_worst < 1e-4;
  std::printf("blstm      max_rel_error %.3e (%s) over %d instances  %s\n", blstm_worst, blstm_where.c_str(),
              opt.instances, blstm_ok ? "ok" : "FAIL");
  std::printf("skipgram   max_rel_error %.3e  %s\n", sg_worst, sg_ok ? "ok" : "FAIL");
  std::printf("logistic   max_rel_error %.3e (%s)  %s\n", logit.max_rel_error, logit.worst_parameter.c_str(),
              logit.passed ? "ok" : "FAIL");
  return blstm_ok && sg_ok && logit.passed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Medical term extraction and video knowledge classification pipeline"};
  app.require_subcommand(1);

  std::string config_file;
  std::vector<std::string> overrides;
  std::string output_dir;
  std::int64_t seed = 0;
  bool seed_given = false;

  std::vector<CLI::App*> stage_commands;
  const std::vector<std::pair<std::string, std::string>> stages = {
      {"ingest", "load metadata, captions and annotations; write the corpus and split"},
      {"embed", "train skip-gram embeddings"},
      {"train-tagger", "train the BLSTM term tagger"},
      {"tag", "tag every sentence"},
      {"frames", "count medical objects in frame predictions"},
      {"train-classifier", "train the knowledge classifier"},
      {"evaluate", "evaluate and write the report"},
      {"all", "run every stage in order"},
  };
  for (const auto& [name, help] : stages) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", config_file, "key = value config file");
    sub->add_option("-s,--set", overrides, "override a config key (key=value), repeatable");
    sub->add_option("-o,--output-dir", output_dir, "output directory (overrides config)");
    sub->add_option("--seed", seed, "global seed (overrides config)")->each([&](const std::string&) { seed_given = true; });
    stage_commands.push_back(sub);
  }

  GradcheckOptions grad;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference checks of every analytic gradient");
  gradcheck->add_option("--seed", grad.seed, "seed for the random instances");
  gradcheck->add_option("--instances", grad.instances, "number of random BLSTM instances")->check(CLI::PositiveNumber);
  gradcheck->add_option("--eps", grad.eps, "finite-difference step")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gradcheck->parsed()) return run_gradcheck(grad) ? 0 : 2;

    for (auto* sub : stage_commands) {
      if (!sub->parsed()) continue;
      RunConfig config;
      if (!config_file.empty()) apply_config_file(config, config_file);
      for (const auto& o : overrides) apply_override(config, o);
      if (!output_dir.empty()) config.set("output_dir", output_dir);
      if (seed_given) config.set("seed", std::to_string(seed));

      const RunManifest manifest = run_stage(config, sub->get_name());
      for (const auto& w : manifest.warnings) std::cerr << "warning: " << w << "\n";
      for (const auto& s : manifest.stages) {
        std::printf("%-17s %zu files  %.2f s\n", s.stage.c_str(), s.output_digests.size(), s.seconds);
      }
    }
    return 0;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
