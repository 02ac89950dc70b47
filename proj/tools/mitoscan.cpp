#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "mitoscan/pipeline.hpp"

namespace {

using mitoscan::ErrorCode;
using mitoscan::RunConfig;

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitInternal = 4;

std::string escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out.push_back('\\');
    if (ch == '\n') {
      out += "\\n";
      continue;
    }
    out.push_back(ch);
  }
  return out;
}

int report(const std::string& code, const std::string& message, int status) {
  std::cerr << "error code=" << code << " message=\"" << escape(message) << "\"\n";
  return status;
}

int exit_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::InternalInvariant:
      return kExitInternal;
    case ErrorCode::InvalidParam:
    case ErrorCode::InvalidArgument:
      return kExitUsage;
    default:
      return kExitData;
  }
}

void parse_aspect(const std::string& text, RunConfig& cfg) {
  const auto colon = text.find(':');
  int w = 0, h = 0;
  if (colon == std::string::npos || std::sscanf(text.c_str(), "%d:%d", &w, &h) != 2 || w <= 0 || h <= 0) {
    mitoscan::fail(ErrorCode::InvalidParam, "aspect must look like W:H, got " + text);
  }
  cfg.aspect_w = w;
  cfg.aspect_h = h;
}

struct Common {
  std::string aspect;
};

void add_output(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--out", cfg.out_dir, "Output directory")->required();
  sub->add_option("--jobs", cfg.jobs, "Slides processed concurrently")->capture_default_str()->check(CLI::Range(1, 64));
}

void add_geometry(CLI::App* sub, RunConfig& cfg, Common& common) {
  sub->add_option("--downsample", cfg.downsample, "Bin edge D in full-resolution pixels")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  sub->add_option("--area", cfg.area_mm2, "FOI area in mm^2")->capture_default_str();
  sub->add_option("--aspect", common.aspect, "FOI aspect ratio W:H (default 4:3)");
}

void add_estimators(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--estimator", cfg.estimators,
                  "Estimator ID=KIND[:PARAM]; KIND is oracle, noisy:SIGMA, clutter:FP_PER_MM2 or file:PATH "
                  "({slide} expands to the slide id). Repeatable.");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mitotic hotspot selection and evaluation on whole-slide annotation sets"};
  app.require_subcommand(1);
  RunConfig cfg;
  Common common;
  std::string manifest_path;

  auto* synth = app.add_subcommand("synth", "Generate synthetic slides, annotations and thumbnails");
  add_output(synth, cfg);
  add_geometry(synth, cfg, common);
  synth->add_option("--seed", cfg.seed, "Master seed")->capture_default_str();
  synth->add_option("--cases", cfg.cases, "Number of slides")->capture_default_str();
  synth->add_option("--width", cfg.synth.width_px, "Slide width in px")->capture_default_str();
  synth->add_option("--height", cfg.synth.height_px, "Slide height in px")->capture_default_str();
  synth->add_option("--mpp", cfg.synth.mpp, "Microns per pixel")->capture_default_str();
  synth->add_option("--coverage", cfg.coverage, "Tissue coverage for the planted hotspot window")->capture_default_str();
  synth->add_option("--parent-intensity", cfg.synth.parent_intensity_per_mm2, "Cluster parents per mm^2")
      ->capture_default_str();
  synth->add_option("--offspring-mean", cfg.synth.offspring_mean, "Mean mitoses per cluster")->capture_default_str();
  synth->add_option("--offspring-sigma", cfg.synth.offspring_sigma_um, "Cluster spread in um")->capture_default_str();
  synth->add_option("--hotspot-boost", cfg.synth.hotspot_boost, "Offspring multiplier of the planted cluster")
      ->capture_default_str();
  synth->add_flag("!--no-hotspot", cfg.synth.plant_hotspot, "Do not plant a hotspot cluster");
  synth->add_option("--hard-negatives", cfg.synth.hard_negative_per_mm2, "Hard negatives per mm^2")
      ->capture_default_str();
  synth->add_option("--blobs", cfg.synth.blob_count, "Tissue blobs per slide")->capture_default_str();

  auto* mask = app.add_subcommand("mask", "Tissue and valid-center masks from thumbnails");
  add_output(mask, cfg);
  add_geometry(mask, cfg, common);
  mask->add_option("--data", cfg.data_dir, "Dataset directory")->required();
  mask->add_option("--threshold", cfg.tissue_threshold, "Brightness below which a bin is tissue")->capture_default_str();
  mask->add_option("--close-radius", cfg.close_radius, "Closing radius in bins")->capture_default_str();
  mask->add_option("--coverage", cfg.coverage, "Required tissue fraction of the FOI window")->capture_default_str();

  auto* gtmap = app.add_subcommand("gtmap", "Ground-truth mitotic-count maps and exact maxima");
  add_output(gtmap, cfg);
  add_geometry(gtmap, cfg, common);
  gtmap->add_option("--data", cfg.data_dir, "Dataset directory")->required();

  auto* select = app.add_subcommand("select", "Select the FOI with the highest estimated count");
  add_output(select, cfg);
  add_geometry(select, cfg, common);
  select->add_option("--density", cfg.density, "Single density grid (DRF sidecar)");
  select->add_option("--mask", cfg.mask, "Valid-center mask for --density");
  select->add_option("--slides", cfg.slides, "Slide metadata for --density (bounds and mpp)");
  select->add_option("--mpp", cfg.mpp, "Microns per pixel when --slides is absent")->capture_default_str();
  select->add_option("--selector", cfg.selector_id, "Selector id for --density")->capture_default_str();
  select->add_option("--data", cfg.data_dir, "Dataset directory");
  select->add_option("--masks", cfg.masks_dir, "Mask directory from the mask command");
  select->add_option("--seed", cfg.seed, "Master seed for stochastic estimators")->capture_default_str();
  select->add_option("--top-k", cfg.top_k, "Number of non-overlapping FOIs")->capture_default_str();
  add_estimators(select, cfg);

  auto* targets = app.add_subcommand("targets", "Regression targets for sampled patches");
  add_output(targets, cfg);
  targets->add_option("--data", cfg.data_dir, "Dataset directory")->required();
  targets->add_option("--masks", cfg.masks_dir, "Mask directory (random group)");
  targets->add_option("--group", cfg.group, "with_mitosis, with_hard_negative or random")->capture_default_str();
  targets->add_option("--n", cfg.n, "Patches per slide")->capture_default_str();
  targets->add_option("--patch-width", cfg.patch_w, "Patch width in px")->capture_default_str();
  targets->add_option("--patch-height", cfg.patch_h, "Patch height in px")->capture_default_str();
  targets->add_option("--diameter", cfg.diameter_px, "Cell diameter in px")->capture_default_str();
  targets->add_option("--beta", cfg.beta, "Target scale")->capture_default_str();
  targets->add_option("--seed", cfg.seed, "Master seed")->capture_default_str();

  auto* evaluate = app.add_subcommand("evaluate", "Evaluate selections against the ground truth");
  add_output(evaluate, cfg);
  add_geometry(evaluate, cfg, common);
  evaluate->add_option("--data", cfg.data_dir, "Dataset directory")->required();
  evaluate->add_option("--masks", cfg.masks_dir, "Mask directory")->required();
  evaluate->add_option("--selections", cfg.selections, "FOI list (JSON) from any selector");
  evaluate->add_option("--seed", cfg.seed, "Master seed for stochastic estimators")->capture_default_str();
  evaluate->add_option("--threshold", cfg.threshold, "Mitotic-count threshold for case groups")->capture_default_str();
  evaluate->add_option("--dist-support", cfg.dist_support, "Distribution over 'valid' or 'all' centers")
      ->capture_default_str();
  evaluate->add_option("--kappa", cfg.kappa, "Agreement statistic: fleiss or cohen")->capture_default_str();
  evaluate->add_option("--expect", cfg.expected_selectors, "Selector expected to have selections. Repeatable.");
  evaluate->add_option("--agreement", cfg.agreement, "Rater group NAME=R1,R2,... Repeatable.");
  add_estimators(evaluate, cfg);

  auto* render = app.add_subcommand("render", "Render any grid as a heatmap PNG");
  add_output(render, cfg);
  render->add_option("--grid", cfg.grid, "DRF sidecar")->required();
  render->add_option("--name", cfg.name, "Output file stem (default: grid file stem)");

  auto* replay = app.add_subcommand("replay", "Re-run an invocation from its manifest");
  replay->add_option("manifest", manifest_path, "manifest.<command>.json")->required();
  replay->add_option("--out", cfg.out_dir, "Override the output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report("Usage", e.what(), kExitUsage);
  }

  try {
    if (replay->parsed()) {
      auto loaded = mitoscan::config_from_manifest(
          nlohmann::json::parse(mitoscan::read_text_file(manifest_path), nullptr, false));
      if (!cfg.out_dir.empty()) loaded.out_dir = cfg.out_dir;
      mitoscan::run_command(loaded);
      return 0;
    }
    cfg.command = app.get_subcommands().front()->get_name();
    if (!common.aspect.empty()) parse_aspect(common.aspect, cfg);
    if (cfg.command == "select") {
      if (!cfg.density.empty() && cfg.mask.empty()) mitoscan::fail(ErrorCode::InvalidParam, "--density needs --mask");
      if (cfg.density.empty() && (cfg.data_dir.empty() || cfg.masks_dir.empty())) {
        mitoscan::fail(ErrorCode::InvalidParam, "select needs --density/--mask or --data/--masks/--estimator");
      }
    }
    mitoscan::run_command(cfg);
    return 0;
  } catch (const mitoscan::Error& e) {
    return report(std::string(mitoscan::to_string(e.code())), e.what(), exit_status(e.code()));
  } catch (const std::exception& e) {
    return report("Internal", e.what(), kExitInternal);
  }
}
