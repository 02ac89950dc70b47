#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "mitoscan/drf.hpp"
#include "mitoscan/estimators.hpp"
#include "mitoscan/evaluation.hpp"
#include "mitoscan/foi_select.hpp"
#include "mitoscan/ground_truth.hpp"
#include "mitoscan/io.hpp"
#include "mitoscan/regress_target.hpp"
#include "mitoscan/render.hpp"
#include "mitoscan/synth.hpp"
#include "mitoscan/tissue_mask.hpp"

// Subcommand drivers shared by the CLI and the end-to-end tests. Every
// driver reads a RunConfig, writes its outputs atomically into out_dir and
// finishes with a manifest that is enough to replay the invocation.

namespace mitoscan {

inline constexpr const char* kToolName = "mitoscan";
inline constexpr const char* kToolVersion = "1.0.0";

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SynthParams, width_px, height_px, mpp, downsample, blob_count,
                                                blob_radius_min_mm, blob_radius_max_mm, blob_edge_mm,
                                                min_tissue_fraction, max_tissue_fraction, tissue_threshold,
                                                parent_intensity_per_mm2, offspring_mean, offspring_sigma_um,
                                                plant_hotspot, hotspot_boost, hard_negative_per_mm2, planted_area_mm2,
                                                planted_aspect_w, planted_aspect_h, planted_coverage)

struct RunConfig {
  std::string command;
  std::string data_dir;
  std::string masks_dir;
  std::string out_dir;
  std::string selections;
  std::string density;
  std::string mask;
  std::string slides;
  std::string grid;
  std::string name;

  int downsample = kDefaultDownsample;
  double area_mm2 = kTenHpfAreaMm2;
  int aspect_w = kDefaultAspectW;
  int aspect_h = kDefaultAspectH;
  double mpp = kDefaultMpp;
  double coverage = kDefaultCoverage;
  int close_radius = kDefaultCloseRadius;
  double tissue_threshold = kDefaultTissueThreshold;

  std::vector<std::string> estimators;
  std::vector<std::string> schemes = {"Kiupel", "ElstonEllis"};
  std::uint64_t seed = 0;
  int jobs = 1;

  int cases = 1;
  SynthParams synth;

  std::string group = "with_mitosis";
  int n = 16;
  std::int64_t patch_w = 512;
  std::int64_t patch_h = 512;
  double diameter_px = kDefaultCellDiameterPx;
  double beta = kDefaultBeta;

  int top_k = 1;
  std::string selector_id = "algorithm";

  std::int64_t threshold = kKiupelThreshold;
  std::string dist_support = "valid";
  std::string kappa = "fleiss";
  std::vector<std::string> expected_selectors;
  std::vector<std::string> agreement;  // "name=rater1,rater2,..."
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(RunConfig, command, data_dir, masks_dir, out_dir, selections, density,
                                                mask, slides, grid, name, downsample, area_mm2, aspect_w, aspect_h,
                                                mpp, coverage, close_radius, tissue_threshold, estimators, schemes,
                                                seed, jobs, cases, synth, group, n, patch_w, patch_h, diameter_px,
                                                beta, top_k, selector_id, threshold, dist_support, kappa,
                                                expected_selectors, agreement)

inline nlohmann::json manifest_json(const RunConfig& cfg) {
  return {{"tool", kToolName}, {"version", kToolVersion}, {"command", cfg.command}, {"config", cfg}};
}

inline RunConfig config_from_manifest(const nlohmann::json& m) {
  if (!m.is_object() || !m.contains("config")) fail(ErrorCode::MalformedFile, "manifest: missing config");
  try {
    return m.at("config").get<RunConfig>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::MalformedFile, std::string("manifest: ") + e.what());
  }
}

inline std::string manifest_name(const std::string& command) { return "manifest." + command + ".json"; }

/// Tracks files written by one invocation so a failure can remove them.
class OutputSession {
 public:
  explicit OutputSession(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    created_ = !std::filesystem::exists(dir_, ec);
    std::filesystem::create_directories(dir_, ec);
    if (ec || !std::filesystem::is_directory(dir_)) fail(ErrorCode::Io, "cannot create output directory " + dir_.string());
  }

  const std::filesystem::path& dir() const { return dir_; }

  void write(const std::string& name, std::string_view bytes) {
    const auto path = dir_ / name;
    written_.push_back(path);
    write_file_atomic(path, bytes);
  }

  void write_raster(const std::string& sidecar_name, const DensityGrid& grid) {
    validate_values(grid);
    const std::filesystem::path sidecar = dir_ / sidecar_name;
    write(drf_payload_path(sidecar).filename().string(), encode_f32_le(grid.values));
    write(sidecar_name, dump_json(drf_header(grid)));
  }

  void rollback() noexcept {
    std::error_code ec;
    for (const auto& p : written_) {
      std::filesystem::remove(p, ec);
      auto tmp = p;
      tmp += ".tmp";
      std::filesystem::remove(tmp, ec);
    }
    written_.clear();
    if (created_ && std::filesystem::is_empty(dir_, ec)) std::filesystem::remove(dir_, ec);
  }

 private:
  std::filesystem::path dir_;
  std::vector<std::filesystem::path> written_;
  bool created_ = false;
};

/// Runs fn(i) for i in [0, n) on up to `jobs` threads; results keep index order
/// and the lowest-index failure is rethrown.
template <typename T>
std::vector<T> parallel_map(std::size_t n, int jobs, const std::function<T(std::size_t)>& fn) {
  std::vector<std::optional<T>> slots(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        slots[i] = fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto threads = static_cast<std::size_t>(std::clamp(jobs, 1, 64));
  if (threads <= 1 || n <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < std::min(threads, n); ++t) pool.emplace_back(worker);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<T> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

// --- dataset directory layout ----------------------------------------------------------

inline std::string slides_file() { return "slides.json"; }
inline std::string annotations_file(const std::string& id) { return id + ".annotations.csv"; }
inline std::string thumb_file(const std::string& id) { return id + ".thumb.json"; }
inline std::string planted_file(const std::string& id) { return id + ".planted.json"; }
inline std::string tissue_file(const std::string& id) { return id + ".tissue.json"; }
inline std::string valid_file(const std::string& id) { return id + ".valid.json"; }
inline std::string gtmc_file(const std::string& id) { return id + ".gtmc.json"; }

struct Dataset {
  std::vector<SlideMeta> slides;
  AnnotationMap annotations;
};

inline Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  ds.slides = load_slide_meta(dir / slides_file());
  const auto registry = make_registry(ds.slides);
  for (const auto& s : ds.slides) {
    const auto path = dir / annotations_file(s.slide_id);
    if (!std::filesystem::exists(path)) {
      ds.annotations[s.slide_id].slide = s;
      continue;
    }
    auto per_file = load_annotations(path, registry);
    for (auto& [id, set] : per_file) {
      auto& dst = ds.annotations[id];
      dst.slide = set.slide;
      dst.annotations.insert(dst.annotations.end(), set.annotations.begin(), set.annotations.end());
    }
  }
  for (auto& [id, set] : ds.annotations) set.canonicalize();
  return ds;
}

inline FoiShape config_shape(const RunConfig& cfg, double mpp) {
  return foi_shape(cfg.area_mm2, cfg.aspect_w, cfg.aspect_h, mpp);
}

inline std::vector<EstimatorSpec> config_estimators(const RunConfig& cfg) {
  std::vector<EstimatorSpec> out;
  std::set<std::string> ids;
  for (const auto& text : cfg.estimators) {
    out.push_back(parse_estimator_spec(text));
    if (!ids.insert(out.back().id).second) fail(ErrorCode::InvalidParam, "duplicate estimator id " + out.back().id);
  }
  return out;
}

inline BinaryMask load_mask(const std::filesystem::path& path, MaskSemantics semantics) {
  BinaryMask m;
  m.grid = read_raster(path);
  if (m.grid.kind != GridKind::Mask) fail(ErrorCode::InvalidField, path.string() + ": expected kind Mask");
  m.semantics = semantics;
  return m;
}

// --- subcommands -------------------------------------------------------------------------

inline void run_synth(const RunConfig& cfg, OutputSession& out) {
  if (cfg.cases < 1) fail(ErrorCode::InvalidParam, "synth: cases must be >= 1");
  auto p = cfg.synth;
  p.downsample = cfg.downsample;
  p.planted_area_mm2 = cfg.area_mm2;
  p.planted_aspect_w = cfg.aspect_w;
  p.planted_aspect_h = cfg.aspect_h;
  p.planted_coverage = cfg.coverage;
  const auto cases = parallel_map<SynthCase>(static_cast<std::size_t>(cfg.cases), cfg.jobs,
                                             [&](std::size_t i) { return synth_case(p, static_cast<int>(i), cfg.seed); });
  std::vector<SlideMeta> metas;
  for (const auto& c : cases) {
    metas.push_back(c.slide);
    out.write(annotations_file(c.slide.slide_id), serialize_annotations(c.annotations.annotations));
    out.write_raster(thumb_file(c.slide.slide_id), c.tissue.thumbnail);
    out.write(planted_file(c.slide.slide_id), dump_json(to_json(c.annotations.planted)));
  }
  out.write(slides_file(), serialize_slide_meta(metas));
}

struct MaskResult {
  BinaryMask tissue;
  BinaryMask valid;
};

inline MaskResult compute_masks(const SlideMeta& slide, const DensityGrid& thumb, const RunConfig& cfg) {
  if (thumb.downsample != cfg.downsample || !thumb.same_geometry(slide_grid(slide, cfg.downsample, GridKind::Mask))) {
    fail(ErrorCode::GeometryMismatch, "thumbnail does not match slide " + slide.slide_id + " at downsample " +
                                          std::to_string(cfg.downsample));
  }
  MaskResult r;
  r.tissue = morph_close(tissue_from_thumbnail(thumb, cfg.tissue_threshold), cfg.close_radius);
  r.valid = valid_mask(r.tissue, kernel_bins(config_shape(cfg, slide.mpp), cfg.downsample), cfg.coverage);
  return r;
}

inline void run_mask(const RunConfig& cfg, OutputSession& out) {
  const std::filesystem::path data(cfg.data_dir);
  const auto slides = load_slide_meta(data / slides_file());
  const auto results = parallel_map<MaskResult>(slides.size(), cfg.jobs, [&](std::size_t i) {
    return compute_masks(slides[i], read_raster(data / thumb_file(slides[i].slide_id)), cfg);
  });
  for (std::size_t i = 0; i < slides.size(); ++i) {
    const auto& id = slides[i].slide_id;
    out.write_raster(tissue_file(id), results[i].tissue.grid);
    out.write_raster(valid_file(id), results[i].valid.grid);
    out.write(id + ".tissue.pgm", encode_pgm(results[i].tissue.grid));
    out.write(id + ".valid.pgm", encode_pgm(results[i].valid.grid));
  }
}

inline void run_gtmap(const RunConfig& cfg, OutputSession& out) {
  const auto ds = load_dataset(cfg.data_dir);
  struct GtResult {
    DensityGrid map;
    ExactMax exact;
    FoiShape shape;
  };
  const auto results = parallel_map<GtResult>(ds.slides.size(), cfg.jobs, [&](std::size_t i) {
    const auto& set = ds.annotations.at(ds.slides[i].slide_id);
    const auto shape = config_shape(cfg, set.slide.mpp);
    return GtResult{gt_mc_map(set, shape, cfg.downsample),
                    exact_max_window(set, static_cast<double>(shape.width_px), static_cast<double>(shape.height_px)),
                    shape};
  });
  nlohmann::json summary = nlohmann::json::array();
  for (std::size_t i = 0; i < ds.slides.size(); ++i) {
    const auto& id = ds.slides[i].slide_id;
    const auto& r = results[i];
    out.write_raster(gtmc_file(id), r.map);
    float grid_max = 0.0f;
    for (float v : r.map.values) grid_max = std::max(grid_max, v);
    summary.push_back({{"slide_id", id},
                       {"foi_width_px", r.shape.width_px},
                       {"foi_height_px", r.shape.height_px},
                       {"grid_max_mc", grid_max},
                       {"exact_max_mc", r.exact.count},
                       {"exact_anchor_x_px", r.exact.anchor_x},
                       {"exact_anchor_y_px", r.exact.anchor_y}});
  }
  out.write("gtmap.json", dump_json(summary));
}

inline std::vector<FoiSelection> select_on_map(const DensityGrid& density, const BinaryMask& valid,
                                               const FoiShape& shape, Extent extent, int top_k) {
  const auto ma = density.kind == GridKind::MaMap
                      ? density
                      : moving_window(density, kernel_bins(shape, density.downsample), WindowMode::Sum);
  if (top_k <= 1) return {select_foi(ma, valid, shape, density.downsample, extent)};
  return top_k_foi(ma, valid, shape, density.downsample, top_k, extent);
}

inline void run_select(const RunConfig& cfg, OutputSession& out) {
  std::vector<FoiSelection> all;
  if (!cfg.density.empty()) {
    const auto density = read_raster(cfg.density);
    const auto valid = load_mask(cfg.mask, MaskSemantics::Valid);
    double mpp = cfg.mpp;
    std::optional<Extent> extent;
    if (!cfg.slides.empty()) {
      const auto reg = make_registry(load_slide_meta(cfg.slides));
      const auto it = reg.find(density.slide_id);
      if (it == reg.end()) fail(ErrorCode::UnknownSlide, "unknown slide_id=" + density.slide_id);
      mpp = it->second.mpp;
      extent = slide_extent(it->second);
    }
    const auto shape = config_shape(cfg, mpp);
    for (auto& s : select_on_map(density, valid, shape, extent.value_or(grid_extent(valid.grid)), cfg.top_k)) {
      s.selector_id = cfg.selector_id;
      all.push_back(std::move(s));
    }
  } else {
    const auto ds = load_dataset(cfg.data_dir);
    const auto specs = config_estimators(cfg);
    if (specs.empty()) fail(ErrorCode::InvalidParam, "select: give --density or at least one --estimator");
    const auto per_slide = parallel_map<std::vector<FoiSelection>>(ds.slides.size(), cfg.jobs, [&](std::size_t i) {
      const auto& slide = ds.slides[i];
      const auto& set = ds.annotations.at(slide.slide_id);
      const auto masks_dir = std::filesystem::path(cfg.masks_dir);
      const auto tissue = load_mask(masks_dir / tissue_file(slide.slide_id), MaskSemantics::Tissue);
      const auto valid = load_mask(masks_dir / valid_file(slide.slide_id), MaskSemantics::Valid);
      const auto shape = config_shape(cfg, slide.mpp);
      std::vector<FoiSelection> sels;
      for (const auto& spec : specs) {
        const auto est = estimate(spec, set, tissue, cfg.downsample, estimator_seed(cfg.seed, slide.slide_id, spec.id));
        for (auto& s : select_on_map(est, valid, shape, slide_extent(slide), cfg.top_k)) {
          s.selector_id = spec.id;
          sels.push_back(std::move(s));
        }
      }
      return sels;
    });
    for (const auto& v : per_slide) all.insert(all.end(), v.begin(), v.end());
  }
  out.write("foi.json", serialize_foi_list(all));
}

inline void run_targets(const RunConfig& cfg, OutputSession& out) {
  PatchGroup group{};
  if (!parse_patch_group(cfg.group, group)) fail(ErrorCode::InvalidParam, "unknown patch group " + cfg.group);
  const auto ds = load_dataset(cfg.data_dir);
  const auto per_slide = parallel_map<std::vector<RegressionTarget>>(ds.slides.size(), cfg.jobs, [&](std::size_t i) {
    const auto& slide = ds.slides[i];
    const auto& set = ds.annotations.at(slide.slide_id);
    BinaryMask tissue;
    if (group == PatchGroup::Random) {
      tissue = load_mask(std::filesystem::path(cfg.masks_dir) / tissue_file(slide.slide_id), MaskSemantics::Tissue);
    }
    const auto patches =
        sample_patches(set, tissue, group, cfg.n, cfg.patch_w, cfg.patch_h, derive_seed(cfg.seed, fnv1a(slide.slide_id)));
    std::vector<RegressionTarget> targets;
    for (const auto& p : patches) targets.push_back(patch_target(set, p, cfg.diameter_px, cfg.beta));
    return targets;
  });
  std::vector<RegressionTarget> all;
  for (const auto& v : per_slide) all.insert(all.end(), v.begin(), v.end());
  out.write("targets.csv", serialize_targets(all));
}

inline KappaVariant parse_kappa_variant(const std::string& s) {
  if (s == "fleiss") return KappaVariant::FleissGroup;
  if (s == "cohen") return KappaVariant::CohenPairwise;
  fail(ErrorCode::InvalidParam, "unknown kappa variant " + s);
}

inline void run_evaluate(const RunConfig& cfg, OutputSession& out) {
  const auto ds = load_dataset(cfg.data_dir);
  ReportConfig rc;
  rc.area_mm2 = cfg.area_mm2;
  rc.aspect_w = cfg.aspect_w;
  rc.aspect_h = cfg.aspect_h;
  rc.downsample = cfg.downsample;
  rc.threshold = cfg.threshold;
  if (cfg.dist_support != "valid" && cfg.dist_support != "all") {
    fail(ErrorCode::InvalidParam, "dist support must be 'valid' or 'all'");
  }
  rc.valid_only_distribution = cfg.dist_support == "valid";
  rc.seed = cfg.seed;
  rc.estimators = config_estimators(cfg);
  rc.expected_selectors = cfg.expected_selectors;
  rc.kappa_variant = parse_kappa_variant(cfg.kappa);
  for (const auto& g : cfg.agreement) {
    const auto eq = g.find('=');
    if (eq == std::string::npos) fail(ErrorCode::InvalidParam, "agreement group must be name=r1,r2,...");
    std::vector<std::string> raters;
    for (auto f : split_csv_line(std::string_view(g).substr(eq + 1))) raters.emplace_back(f);
    rc.agreement_groups[g.substr(0, eq)] = raters;
  }
  const auto selections = cfg.selections.empty() ? std::vector<FoiSelection>{} : load_foi_list(cfg.selections);

  std::map<std::string, CaseInput> inputs;
  for (const auto& slide : ds.slides) {
    const auto masks_dir = std::filesystem::path(cfg.masks_dir);
    CaseInput in;
    in.annotations = ds.annotations.at(slide.slide_id);
    in.tissue = load_mask(masks_dir / tissue_file(slide.slide_id), MaskSemantics::Tissue);
    in.valid = load_mask(masks_dir / valid_file(slide.slide_id), MaskSemantics::Valid);
    inputs.emplace(slide.slide_id, std::move(in));
  }
  const auto reports = build_reports(inputs, selections, rc);
  for (const auto& rep : reports.cases) out.write("report." + rep.slide_id + ".json", dump_json(to_json(rep)));
  out.write("summary.json", dump_json(reports.summary));
  out.write("summary.csv", summary_csv(reports.cases));
}

inline void run_render(const RunConfig& cfg, OutputSession& out) {
  const auto grid = read_raster(cfg.grid);
  const auto img = render_heatmap(grid);
  std::string stem = cfg.name;
  if (stem.empty()) stem = std::filesystem::path(cfg.grid).stem().string();
  out.write(heatmap_filename(stem, img), encode_png(img));
}

inline void dispatch(const RunConfig& cfg, OutputSession& out) {
  if (cfg.command == "synth") return run_synth(cfg, out);
  if (cfg.command == "mask") return run_mask(cfg, out);
  if (cfg.command == "gtmap") return run_gtmap(cfg, out);
  if (cfg.command == "select") return run_select(cfg, out);
  if (cfg.command == "targets") return run_targets(cfg, out);
  if (cfg.command == "evaluate") return run_evaluate(cfg, out);
  if (cfg.command == "render") return run_render(cfg, out);
  fail(ErrorCode::InvalidParam, "unknown command " + cfg.command);
}

/// Runs one invocation end to end: outputs plus manifest, or nothing on failure.
inline void run_command(const RunConfig& cfg) {
  if (cfg.out_dir.empty()) fail(ErrorCode::InvalidParam, "output directory required");
  OutputSession out(cfg.out_dir);
  try {
    dispatch(cfg, out);
    out.write(manifest_name(cfg.command), dump_json(manifest_json(cfg)));
  } catch (...) {
    out.rollback();
    throw;
  }
}

}  // namespace mitoscan
