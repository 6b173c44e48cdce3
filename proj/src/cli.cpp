#include "nsf/cli.hpp"

#include <cstdio>
#include <filesystem>

#include "CLI11.hpp"
#include "nsf/errors.hpp"
#include "nsf/pipeline.hpp"

namespace nsf {

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Spatial and nonspatial count factorization"};
  app.require_subcommand(1);

  auto* sim = app.add_subcommand("simulate", "Write a synthetic dataset with known patterns");
  std::string sim_kind;
  std::uint64_t sim_seed = 0;
  std::filesystem::path sim_out;
  sim->add_option("--kind", sim_kind, "ggblocks or quilt")->required()->check(CLI::IsMember({"ggblocks", "quilt"}));
  sim->add_option("--seed", sim_seed, "Random seed");
  sim->add_option("--out", sim_out, "Output directory")->required();

  auto* fit = app.add_subcommand("fit", "Fit a factor model and write an archive and report");
  FitOptions fo;
  std::filesystem::path fit_counts, fit_coords, fit_out;
  int fit_T = -1;
  std::string lik;
  fit->add_option("--counts", fit_counts, "Counts: dense .csv or coordinate triplets")->required()->check(CLI::ExistingFile);
  fit->add_option("--coords", fit_coords, "Coordinates CSV")->required()->check(CLI::ExistingFile);
  std::string model_kind, kernel_kind;
  fit->add_option("--model", model_kind, "fa, pnmf, rsf, nsf or nsfh")
      ->required()
      ->check(CLI::IsMember({"fa", "pnmf", "rsf", "nsf", "nsfh"}));
  fit->add_option("-L", fo.L, "Number of components")->required();
  fit->add_option("-T", fit_T, "Number of spatial components (nsfh)");
  fit->add_option("--lik", lik, "poi, nb or gau")->check(CLI::IsMember({"poi", "nb", "gau"}));
  fit->add_option("--kernel", kernel_kind, "matern32 or sqexp")->check(CLI::IsMember({"matern32", "sqexp"}));
  fit->add_option("-M", fo.M, "Inducing points (0 = every training observation)");
  fit->add_option("-S", fo.S, "Monte Carlo samples per step");
  fit->add_option("--lr", fo.learning_rate, "Adam learning rate");
  fit->add_option("--max-steps", fo.max_steps, "Maximum optimizer steps");
  fit->add_option("--seed", fo.seed, "Random seed");
  auto* fit_split_opt = fit->add_option("--split-seed", fo.split_seed, "Seed of the train/validation split (default: --seed)");
  fit->add_option("--train-frac", fo.train_fraction, "Training fraction of observations");
  fit->add_option("--min-total", fo.min_total_count, "Drop observations with fewer total counts");
  fit->add_option("--n-top", fo.n_top, "Keep this many highest-deviance features (0 = all)");
  fit->add_option("--out", fit_out, "Output directory")->required();

  auto* ev = app.add_subcommand("eval", "Validation deviance of an archived model");
  std::filesystem::path ev_archive, ev_counts, ev_coords, ev_out;
  std::uint64_t ev_split = 0;
  ev->add_option("--model-archive", ev_archive, "Model archive")->required()->check(CLI::ExistingFile);
  ev->add_option("--counts", ev_counts, "Counts file")->required()->check(CLI::ExistingFile);
  ev->add_option("--coords", ev_coords, "Coordinates CSV")->required()->check(CLI::ExistingFile);
  auto* ev_split_opt = ev->add_option("--split-seed", ev_split, "Override the archived split seed");
  ev->add_option("--out", ev_out, "Output directory")->required();

  auto* post = app.add_subcommand("postprocess", "Normalized factors, loadings, scores and plot tables");
  std::filesystem::path pp_archive, pp_out;
  Index top_k = 10;
  post->add_option("--model-archive", pp_archive, "Model archive")->required()->check(CLI::ExistingFile);
  post->add_option("--top-k", top_k, "Top features per component")->required();
  post->add_option("--out", pp_out, "Output directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    apply_thread_limit();
    if (*sim) {
      run_simulate_command(sim_kind_from_string(sim_kind), sim_seed, sim_out);
    } else if (*fit) {
      fo.kind = model_kind_from_string(model_kind);
      if (!kernel_kind.empty()) fo.kernel = kernel_kind_from_string(kernel_kind);
      if (fo.L < 1) throw ArgumentError("-L must be at least 1");
      if (fit_T >= 0) fo.T = fit_T;
      if (!lik.empty()) fo.likelihood = likelihood_family_from_string(lik);
      if (fit_split_opt->count() == 0) fo.split_seed = fo.seed;
      run_fit_command(fit_counts, fit_coords, fo, fit_out);
    } else if (*ev) {
      std::optional<std::uint64_t> split;
      if (ev_split_opt->count() > 0) split = ev_split;
      run_eval_command(ev_archive, ev_counts, ev_coords, split, ev_out);
    } else if (*post) {
      run_postprocess_command(pp_archive, top_k, pp_out);
    }
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsage;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kExitUsage;
  } catch (const UnsupportedModelError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const ParameterDomainError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace nsf
