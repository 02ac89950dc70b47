#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "mitoscan/drf.hpp"
#include "mitoscan/raster.hpp"
#include "mitoscan/rng.hpp"
#include "mitoscan/tissue_mask.hpp"

namespace mitoscan {

enum class EstimatorKind { Oracle, Noisy, Clutter, ExternalFile };

constexpr std::string_view to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::Oracle: return "oracle";
    case EstimatorKind::Noisy: return "noisy";
    case EstimatorKind::Clutter: return "clutter";
    case EstimatorKind::ExternalFile: return "file";
  }
  return "unknown";
}

/// Stand-in for a learned mitotic density estimator.
struct EstimatorSpec {
  std::string id;
  EstimatorKind kind = EstimatorKind::Oracle;
  double sigma = 0.0;    // Noisy: per-bin Gaussian std
  double fp_rate = 0.0;  // Clutter: false positives per mm^2 of tissue
  std::string path;      // ExternalFile: DRF sidecar; "{slide}" expands to the slide id
};

inline void validate(const EstimatorSpec& spec) {
  if (spec.id.empty()) fail(ErrorCode::InvalidParam, "estimator id must be non-empty");
  if (spec.kind == EstimatorKind::Noisy && !(spec.sigma >= 0.0 && std::isfinite(spec.sigma))) {
    fail(ErrorCode::InvalidParam, "estimator " + spec.id + ": sigma must be finite and >= 0");
  }
  if (spec.kind == EstimatorKind::Clutter && !(spec.fp_rate >= 0.0 && std::isfinite(spec.fp_rate))) {
    fail(ErrorCode::InvalidParam, "estimator " + spec.id + ": fp_rate must be finite and >= 0");
  }
  if (spec.kind == EstimatorKind::ExternalFile && spec.path.empty()) {
    fail(ErrorCode::InvalidParam, "estimator " + spec.id + ": path required");
  }
}

/// Parses "ID=KIND[:PARAM]" or "KIND[:PARAM]" (id defaults to the full text),
/// e.g. "oracle", "n1=noisy:0.5", "clutter:10", "ext=file:maps/{slide}.json".
inline EstimatorSpec parse_estimator_spec(std::string_view text) {
  EstimatorSpec spec;
  std::string_view body = text;
  if (const auto eq = text.find('='); eq != std::string_view::npos) {
    spec.id = std::string(text.substr(0, eq));
    body = text.substr(eq + 1);
  } else {
    spec.id = std::string(text);
  }
  std::string_view kind = body;
  std::string_view param;
  if (const auto colon = body.find(':'); colon != std::string_view::npos) {
    kind = body.substr(0, colon);
    param = body.substr(colon + 1);
  }
  auto number = [&](double& out) {
    if (!parse_double(param, out)) fail(ErrorCode::InvalidParam, "estimator '" + std::string(text) + "': bad number");
  };
  if (kind == "oracle") {
    spec.kind = EstimatorKind::Oracle;
  } else if (kind == "noisy") {
    spec.kind = EstimatorKind::Noisy;
    number(spec.sigma);
  } else if (kind == "clutter") {
    spec.kind = EstimatorKind::Clutter;
    number(spec.fp_rate);
  } else if (kind == "file") {
    spec.kind = EstimatorKind::ExternalFile;
    spec.path = std::string(param);
  } else {
    fail(ErrorCode::InvalidParam, "estimator '" + std::string(text) + "': unknown kind");
  }
  validate(spec);
  return spec;
}

inline std::string format_estimator_spec(const EstimatorSpec& s) {
  std::string out = s.id + "=" + std::string(to_string(s.kind));
  switch (s.kind) {
    case EstimatorKind::Oracle: break;
    case EstimatorKind::Noisy: out += ":" + format_real(s.sigma); break;
    case EstimatorKind::Clutter: out += ":" + format_real(s.fp_rate); break;
    case EstimatorKind::ExternalFile: out += ":" + s.path; break;
  }
  return out;
}

inline std::string expand_slide_path(const std::string& pattern, const std::string& slide_id) {
  std::string out = pattern;
  const std::string token = "{slide}";
  for (auto pos = out.find(token); pos != std::string::npos; pos = out.find(token, pos + slide_id.size())) {
    out.replace(pos, token.size(), slide_id);
  }
  return out;
}

/// Produces the bin-level density plane fed to the moving window.
/// Oracle: binned mitoses. Noisy: oracle + N(0, sigma) per bin, clipped at 0.
/// Clutter: oracle + Poisson(fp_rate * tissue area) unit impulses on uniformly
/// drawn tissue bins. ExternalFile: the DRF as stored, geometry-checked.
inline DensityGrid estimate(const EstimatorSpec& spec, const AnnotationSet& set, const BinaryMask& tissue,
                            int downsample, std::uint64_t seed) {
  validate(spec);
  const auto& slide = set.slide;
  if (spec.kind == EstimatorKind::ExternalFile) {
    auto g = read_raster(expand_slide_path(spec.path, slide.slide_id));
    if (g.downsample != downsample || g.rows != ceil_div(slide.height_px, downsample) ||
        g.cols != ceil_div(slide.width_px, downsample)) {
      fail(ErrorCode::GeometryMismatch, "estimator " + spec.id + ": raster geometry does not match slide " +
                                            slide.slide_id + " at downsample " + std::to_string(downsample));
    }
    return g;
  }

  auto grid = bin_points(set, LabelFilter::Mitosis, downsample);
  grid.kind = GridKind::Estimate;
  Rng rng(seed);
  if (spec.kind == EstimatorKind::Noisy && spec.sigma > 0.0) {
    for (auto& v : grid.values) {
      v = static_cast<float>(std::max(0.0, static_cast<double>(v) + rng.normal(0.0, spec.sigma)));
    }
  } else if (spec.kind == EstimatorKind::Clutter && spec.fp_rate > 0.0) {
    if (!tissue.grid.same_geometry(grid)) {
      fail(ErrorCode::GeometryMismatch, "estimator " + spec.id + ": tissue mask does not match slide " + slide.slide_id);
    }
    std::vector<std::size_t> tissue_bins;
    for (std::size_t i = 0; i < tissue.grid.size(); ++i) {
      if (tissue.grid.values[i] != 0.0f) tissue_bins.push_back(i);
    }
    if (!tissue_bins.empty()) {
      const auto n = rng.poisson(spec.fp_rate * tissue_area_mm2(slide, tissue));
      for (std::uint64_t i = 0; i < n; ++i) grid.values[tissue_bins[rng.index(tissue_bins.size())]] += 1.0f;
    }
  }
  return grid;
}

}  // namespace mitoscan
