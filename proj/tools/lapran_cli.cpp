// Command-line front end: budget math, encoding, reconstruction, training,
// evaluation and the fusion ablation. One command per process.
//
// Exit codes: 0 ok, 2 config error, 3 data/IO error, 4 numeric failure.

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include "lapran/experiment.hpp"
#include "lapran/mrcs.hpp"

namespace fs = std::filesystem;
using namespace lapran;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

bool g_quiet = false;

void say(const std::string& line) {
  if (!g_quiet) std::cout << line << "\n";
}

sensing::Rational parse_beta(const std::string& s) {
  const auto slash = s.find('/');
  if (slash == std::string::npos) {
    // Accept integral or x.5-style decimals exactly via a denominator of 2.
    const double v = std::stod(s);
    if (v == std::floor(v)) return {static_cast<std::int64_t>(v), 1};
    if (2 * v == std::floor(2 * v)) return {static_cast<std::int64_t>(2 * v), 2};
    throw config::ConfigError("beta must be integral, half-integral or num/den");
  }
  return {std::stoll(s.substr(0, slash)), std::stoll(s.substr(slash + 1))};
}

fs::path default_run_root(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("LAPRAN_RUN_DIR")) return env;
  return "runs";
}

fs::path make_run_dir(const fs::path& root, const config::ExperimentConfig& cfg) {
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  const auto stamp = std::chrono::duration_cast<std::chrono::seconds>(now).count();
  return root / (config::config_hash(cfg) + "-" + std::to_string(stamp));
}

int cmd_budget(std::int64_t m, double cr, const std::string& beta_str, int k,
               std::int64_t N, std::int64_t sparsity) {
  const sensing::Rational beta = parse_beta(beta_str);
  if (cr > 0) m = sensing::base_dim_for_cr(cr, beta, k, N);
  if (m < 1) throw config::ConfigError("budget: provide --m or --cr");
  auto dims = sensing::derive_stage_dims(m, beta, k);
  if (dims.back() > N) throw config::ConfigError("budget: more measurements than pixels");
  if (beta.value() == sensing::kBetaUpperBound)
    say("note: beta = 4 is the upper bound under a constant sparsity ratio");
  std::cout << "stage,measurements,cr\n";
  for (int i = 0; i < k; ++i)
    std::cout << (i + 1) << "," << dims[static_cast<size_t>(i)] << ","
              << static_cast<double>(N) / static_cast<double>(dims[static_cast<size_t>(i)])
              << "\n";
  if (sparsity > 0) {
    const auto bound = sensing::rip_lower_bound(sparsity, N);
    std::cout << "rip_lower_bound," << bound << ",\n";
    if (dims.front() < bound)
      say("advisory: stage-1 budget " + std::to_string(dims.front()) +
          " is below the isometry bound " + std::to_string(bound));
  }
  return kExitOk;
}

int cmd_encode(const config::ExperimentConfig& cfg, const std::string& input,
               const std::string& output) {
  const int side = cfg.data.patch_side;
  ImageTensor img = load_image(input, cfg.sensing.channels, side);
  auto mat = sensing::build_matrices(cfg.sensing);
  auto ms = sensing::encode(img.data, mat);
  mrcs::write(output, cfg.sensing, ms);
  say("wrote " + output);
  return kExitOk;
}

int cmd_reconstruct(const std::string& measurements, const std::string& bundle_dir,
                    const std::string& out_dir) {
  auto bundle = recon::load_bundle(bundle_dir);
  auto row = recon::reconstruct_file(measurements, bundle, out_dir);
  if (row.stages_run < bundle.stages())
    say("warning: measurements truncated; enabled depth " +
        std::to_string(row.stages_run) + " of " + std::to_string(bundle.stages()));
  recon::append_timing_csv(fs::path(out_dir) / "timing.csv", {row});
  say("reconstructed " + std::to_string(row.stages_run) + " level(s) in " +
      std::to_string(row.milliseconds) + " ms");
  return kExitOk;
}

std::pair<int, int> parse_stage_range(const std::string& s, int k) {
  if (s.empty()) return {1, k};
  const auto dash = s.find('-');
  if (dash == std::string::npos) {
    const int v = std::stoi(s);
    return {v, v};
  }
  return {std::stoi(s.substr(0, dash)), std::stoi(s.substr(dash + 1))};
}

int cmd_train(const config::ExperimentConfig& cfg, const fs::path& run_dir,
              const std::string& stages) {
  auto [first, last] = parse_stage_range(stages, cfg.sensing.stages);
  if (first < 1 || last > cfg.sensing.stages || first > last)
    throw config::ConfigError("train: bad --stages range");
  auto mat = sensing::build_matrices(cfg.sensing);
  auto splits = experiment::assemble(cfg, mat);
  say("train/val/test patches: " + std::to_string(splits.train.size()) + "/" +
      std::to_string(splits.val.size()) + "/" + std::to_string(splits.test.size()));
  auto cks = experiment::run_train(cfg, run_dir, first, last, splits, mat);
  for (const auto& ck : cks)
    say("stage " + std::to_string(ck.stage) + ": best val MSE " +
        std::to_string(ck.best_val_mse) + " after " + std::to_string(ck.epoch) +
        " epoch(s)");
  say("run dir: " + run_dir.string());
  return kExitOk;
}

int cmd_eval(const config::ExperimentConfig& cfg, const std::string& bundle_dir,
             const fs::path& out_dir) {
  auto bundle = recon::load_bundle(bundle_dir);
  auto mat = sensing::build_matrices(cfg.sensing);
  auto splits = experiment::assemble(cfg, mat);
  auto report = experiment::run_eval(cfg, bundle, splits, mat);
  fs::create_directories(out_dir);
  metrics::write_report_csv({report}, out_dir / "report.csv");
  metrics::write_report_json({report}, out_dir / "report.json");
  say("final-stage PSNR " + std::to_string(report.final.psnr_db) + " dB, SSIM " +
      std::to_string(report.final.ssim_val));
  return kExitOk;
}

int cmd_ablate(const config::ExperimentConfig& cfg, const fs::path& out_dir) {
  auto mat = sensing::build_matrices(cfg.sensing);
  auto splits = experiment::assemble(cfg, mat);
  auto result = train::ablate_fusion(splits.train, splits.val, splits.test, mat, cfg.train);
  fs::create_directories(out_dir);
  nlohmann::json j = {{"config_hash", config::config_hash(cfg)},
                      {"fused_test_mse", result.fused_test_mse},
                      {"nofusion_test_mse", result.nofusion_test_mse}};
  std::ofstream jout(out_dir / "ablation.json");
  jout << j.dump(2) << "\n";
  std::ofstream csv(out_dir / "ablation.csv");
  csv << "stage,fused_mse,nofusion_mse,config_hash\n";
  for (size_t i = 0; i < result.fused_test_mse.size(); ++i)
    csv << (i + 1) << "," << result.fused_test_mse[i] << "," << result.nofusion_test_mse[i]
        << "," << config::config_hash(cfg) << "\n";
  say("wrote " + (out_dir / "ablation.json").string());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compressive-sensing codec and pyramid reconstruction toolkit"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may appear after the subcommand

  std::string config_path, run_dir_flag, seed_flag;
  app.add_option("--config", config_path, "Experiment config file (JSON)");
  app.add_option("--run-dir", run_dir_flag, "Run directory root (or LAPRAN_RUN_DIR)");
  app.add_option("--seed", seed_flag, "Override every seed in the config");
  app.add_flag("--quiet", g_quiet, "Suppress informational output");

  auto* budget = app.add_subcommand("budget", "Print per-stage measurement budgets");
  std::int64_t b_m = 0, b_N = 4096, b_sparsity = 0;
  double b_cr = 0;
  std::string b_beta = "2";
  int b_k = 4;
  budget->add_option("--m", b_m, "Stage-1 measurement count");
  budget->add_option("--cr", b_cr, "Target final-stage compression ratio");
  budget->add_option("--beta", b_beta, "Measurement increment ratio (int or num/den)");
  budget->add_option("--k", b_k, "Stage count");
  budget->add_option("--N", b_N, "Signal dimension per channel");
  budget->add_option("--sparsity", b_sparsity, "Sparsity for the isometry advisory");

  auto* encode = app.add_subcommand("encode", "Encode an image into measurements");
  std::string e_input, e_output;
  encode->add_option("--input", e_input, "Input image")->required();
  encode->add_option("--output", e_output, "Output .mrcs file")->required();

  auto* reconstruct = app.add_subcommand("reconstruct", "Reconstruct from measurements");
  std::string r_meas, r_bundle, r_out = "recon_out";
  reconstruct->add_option("--measurements", r_meas, "Input .mrcs file")->required();
  reconstruct->add_option("--bundle", r_bundle, "Trained run directory")->required();
  reconstruct->add_option("--out", r_out, "Output directory");

  auto* trainc = app.add_subcommand("train", "Train pyramid stages");
  std::string t_stages;
  trainc->add_option("--stages", t_stages, "Stage index or range A-B (default: all)");

  auto* evalc = app.add_subcommand("eval", "Evaluate a trained bundle on the test split");
  std::string v_bundle, v_out = "eval_out";
  evalc->add_option("--bundle", v_bundle, "Trained run directory")->required();
  evalc->add_option("--out", v_out, "Report output directory");

  auto* ablate = app.add_subcommand("ablate", "Fusion-vs-SR ablation");
  std::string a_out = "ablate_out";
  ablate->add_option("--out", a_out, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    auto need_config = [&]() {
      if (config_path.empty()) throw config::ConfigError("--config is required");
      auto cfg = config::load(config_path);
      if (!seed_flag.empty()) {
        const auto s = static_cast<std::uint64_t>(std::stoull(seed_flag));
        cfg.sensing.seed = s;
        cfg.train.seed = s;
        cfg.data.seed = s;
      }
      return cfg;
    };

    if (budget->parsed()) return cmd_budget(b_m, b_cr, b_beta, b_k, b_N, b_sparsity);
    if (encode->parsed()) return cmd_encode(need_config(), e_input, e_output);
    if (reconstruct->parsed()) return cmd_reconstruct(r_meas, r_bundle, r_out);
    if (trainc->parsed()) {
      auto cfg = need_config();
      fs::path root = default_run_root(run_dir_flag);
      // A fixed --run-dir names the run itself so later stages can resume.
      fs::path dir = run_dir_flag.empty() ? make_run_dir(root, cfg) : fs::path(run_dir_flag);
      return cmd_train(cfg, dir, t_stages);
    }
    if (evalc->parsed()) return cmd_eval(need_config(), v_bundle, v_out);
    if (ablate->parsed()) return cmd_ablate(need_config(), a_out);
    return kExitConfig;
  } catch (const config::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const mrcs::FileError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    if (msg.find("non-finite") != std::string::npos) {
      std::cerr << "numeric error: " << msg << "\n";
      return kExitNumeric;
    }
    std::cerr << "data error: " << msg << "\n";
    return kExitData;
  }
}
