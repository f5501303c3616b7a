// Command line front end: runs config-driven experiments, re-verifies
// finished runs, and exports tidy plot data.
//
//   qsakit run <config.json>        execute an experiment, write outputs +
//                                   manifest.json, exit 0 only if all checks pass
//   qsakit verify <manifest.json>   recompute the acceptance checks from the
//                                   outputs on disk
//   qsakit plotdata <manifest.json> long-format CSV (experiment,series,x,y)
//
// QSAKIT_OUTPUT_ROOT prefixes relative output directories.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "qsakit/errors.hpp"
#include "qsakit/experiments.hpp"

int main(int argc, char** argv) {
  CLI::App app{"quasi-stochastic approximation experiment runner"};
  app.set_version_flag("--version", qsa::library_version());
  app.require_subcommand(1);

  std::string config_path, manifest_path, plot_out;
  bool full_scale = false;

  CLI::App* run = app.add_subcommand("run", "run an experiment from a JSON config");
  run->add_option("config", config_path, "path to the experiment config")->required();
  run->add_flag("--full", full_scale, "publication-scale replicate counts");

  CLI::App* verify = app.add_subcommand("verify", "re-run the acceptance checks of a manifest");
  verify->add_option("manifest", manifest_path, "path to manifest.json")->required();

  CLI::App* plot = app.add_subcommand("plotdata", "emit tidy plot data from a manifest");
  plot->add_option("manifest", manifest_path, "path to manifest.json")->required();
  plot->add_option("-o,--output", plot_out, "output CSV path (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      qsa::ExperimentConfig config = qsa::ExperimentConfig::load(config_path);
      if (full_scale) config.full_scale = true;
      const qsa::RunManifest manifest = qsa::run_experiment(config);
      std::cout << manifest.kind << ": " << manifest.outputs.size() << " outputs in "
                << manifest.output_dir << " (" << manifest.wall_clock_s << " s)\n";
      for (const qsa::CheckResult& c : manifest.checks)
        std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << "  value=" << c.value << "  ["
                  << c.detail << "]\n";
      return manifest.all_pass() ? 0 : 2;
    }
    if (verify->parsed()) {
      const bool ok = qsa::verify_manifest(manifest_path, std::cout);
      std::cout << (ok ? "verify: all checks pass\n" : "verify: FAILURES\n");
      return ok ? 0 : 2;
    }
    if (plot->parsed()) {
      const qsa::RunManifest manifest = qsa::RunManifest::load(manifest_path);
      if (plot_out.empty()) {
        qsa::emit_plotdata(manifest, std::cout);
      } else {
        std::ofstream os(plot_out);
        if (!os) throw qsa::ConfigInvalid("cannot write " + plot_out);
        qsa::emit_plotdata(manifest, os);
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
