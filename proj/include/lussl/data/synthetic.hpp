#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "lussl/core/error.hpp"
#include "lussl/core/random.hpp"
#include "lussl/data/dataset.hpp"
#include "lussl/data/image.hpp"

namespace lussl {

/// Procedural stand-in for B-mode lung ultrasound acquisitions.
struct SyntheticConfig {
  int n_patients = 40;
  int videos_per_patient = 2;
  int frames_per_video = 8;
  double pleural_prior = 0.5;   ///< P(view = pleural)
  double blines_prior = 0.4;    ///< P(B-lines | parenchymal)
  double effusion_prior = 0.4;  ///< P(effusion | pleural)
  double unlabelled_fraction = 0.0;
  double noise_level = 0.3;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_patients < 0) throw ConfigError("synthetic.n_patients", "must be >= 0");
    if (videos_per_patient < 0) throw ConfigError("synthetic.videos_per_patient", "must be >= 0");
    if (frames_per_video < 0) throw ConfigError("synthetic.frames_per_video", "must be >= 0");
    auto frac = [](double v, const char* field) {
      if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(field, "must lie in [0,1]");
    };
    frac(pleural_prior, "synthetic.pleural_prior");
    frac(blines_prior, "synthetic.blines_prior");
    frac(effusion_prior, "synthetic.effusion_prior");
    frac(unlabelled_fraction, "synthetic.unlabelled_fraction");
    if (!(noise_level >= 0.0)) throw ConfigError("synthetic.noise_level", "must be >= 0");
  }
};

/// Rendering parameters of one frame. Labels are a pure function of these.
struct FrameParams {
  int view = kParenchymal;
  // parenchymal
  double pleura_depth = 30.0;
  double pleura_thickness = 3.0;
  double pleura_intensity = 0.85;
  double pleura_tilt = 0.0;
  int n_alines = 0;
  double aline_decay = 0.5;
  std::vector<double> bline_x;
  std::vector<double> bline_width;
  double bline_intensity = 0.7;
  // pleural view
  double arc_apex_x = 64.0;
  double arc_apex_y = 70.0;
  double arc_curvature = 0.008;
  double arc_thickness = 4.0;
  double arc_intensity = 0.85;
  double effusion_height = 0.0;  ///< 0 means no anechoic region
  double effusion_level = 0.1;   ///< relative echogenicity of the fluid
  // shared
  double tissue_level = 0.3;
  double below_level = 0.8;  ///< echogenicity below the bright interface, relative to tissue
  int n_clutter = 0;         ///< faint subcutaneous layers near the skin
  std::vector<double> clutter_y;
  std::vector<double> clutter_intensity;
  double gain = 1.0;
  double attenuation = 0.6;

  int ab_class() const { return bline_x.empty() ? kALines : kBLines; }
  int pe_class() const { return effusion_height > 0.0 ? kEffusion : kNoEffusion; }
};

namespace detail {

inline double smoothstep_band(double d, double half_width) {
  // 1 inside the band, smooth falloff over one pixel at the edges
  const double a = std::abs(d) - half_width;
  if (a <= 0.0) return 1.0;
  if (a >= 1.0) return 0.0;
  return 1.0 - a;
}

template <RandomStream R>
FrameParams draw_video_params(int view, int leaf_positive, double patient_gain, double patient_tissue, R& rng) {
  FrameParams p;
  p.view = view;
  p.gain = patient_gain * uniform(rng, 0.85, 1.15);
  p.tissue_level = patient_tissue * uniform(rng, 0.9, 1.1);
  p.attenuation = uniform(rng, 0.3, 0.9);
  p.below_level = uniform(rng, 0.5, 1.1);
  p.n_clutter = static_cast<int>(uniform_index(rng, 3));
  for (int i = 0; i < p.n_clutter; ++i) {
    p.clutter_y.push_back(uniform(rng, 4.0, 20.0));
    p.clutter_intensity.push_back(uniform(rng, 0.35, 0.6));
  }
  if (view == kParenchymal) {
    p.pleura_depth = uniform(rng, 24.0, 48.0);
    p.pleura_thickness = uniform(rng, 2.0, 4.0);
    p.pleura_intensity = uniform(rng, 0.6, 0.9);
    p.pleura_tilt = uniform(rng, -0.1, 0.1);
    p.aline_decay = uniform(rng, 0.4, 0.65);
    if (leaf_positive) {
      const int n = 1 + static_cast<int>(uniform_index(rng, 3));
      for (int i = 0; i < n; ++i) {
        p.bline_x.push_back(uniform(rng, 16.0, 112.0));
        p.bline_width.push_back(uniform(rng, 2.0, 4.0));
      }
      p.bline_intensity = uniform(rng, 0.35, 0.6);
      p.n_alines = static_cast<int>(uniform_index(rng, 3));  // B-lines weaken but need not erase A-lines
      p.aline_decay *= 0.7;
    } else {
      p.n_alines = 1 + static_cast<int>(uniform_index(rng, 3));
    }
  } else {
    p.arc_apex_x = uniform(rng, 32.0, 96.0);
    p.arc_apex_y = uniform(rng, 40.0, 70.0);
    p.arc_curvature = uniform(rng, 0.002, 0.008);
    p.arc_thickness = uniform(rng, 2.5, 4.5);
    p.arc_intensity = uniform(rng, 0.6, 0.9);
    if (leaf_positive) {
      p.effusion_height = uniform(rng, 10.0, 24.0);
      p.effusion_level = uniform(rng, 0.05, 0.2);
    }
  }
  return p;
}

template <RandomStream R>
FrameParams perturb(const FrameParams& base, R& rng) {
  FrameParams p = base;
  auto jitter = [&](double v, double s) { return v + s * (2.0 * uniform01(rng) - 1.0); };
  p.pleura_depth = jitter(p.pleura_depth, 1.0);
  p.pleura_intensity = jitter(p.pleura_intensity, 0.02);
  for (auto& x : p.bline_x) x = jitter(x, 1.5);
  p.arc_apex_x = jitter(p.arc_apex_x, 1.5);
  p.arc_apex_y = jitter(p.arc_apex_y, 1.0);
  if (p.effusion_height > 0.0) p.effusion_height = std::max(8.0, jitter(p.effusion_height, 1.5));
  p.gain = jitter(p.gain, 0.02);
  return p;
}

inline double arc_y(const FrameParams& p, double x) {
  const double dx = x - p.arc_apex_x;
  return p.arc_apex_y - p.arc_curvature * dx * dx;
}

}  // namespace detail

/// Noise-free intensity field for a frame (before speckle and gain).
inline Image render_clean(const FrameParams& p) {
  Image img(kFrameSize, kFrameSize);
  for (int y = 0; y < kFrameSize; ++y) {
    for (int x = 0; x < kFrameSize; ++x) {
      double v = p.tissue_level;
      for (int i = 0; i < p.n_clutter; ++i)
        v = std::max(v, p.clutter_intensity[static_cast<std::size_t>(i)] *
                            detail::smoothstep_band(y - p.clutter_y[static_cast<std::size_t>(i)], 1.0));
      if (p.view == kParenchymal) {
        const double pleura = p.pleura_depth + p.pleura_tilt * (x - 64.0);
        if (y > pleura + p.pleura_thickness) v = p.below_level * p.tissue_level;
        v = std::max(v, p.pleura_intensity * detail::smoothstep_band(y - pleura, p.pleura_thickness / 2.0));
        for (int k = 1; k <= p.n_alines; ++k) {
          const double depth = pleura * (k + 1);
          const double amp = p.pleura_intensity * std::pow(p.aline_decay, k);
          v = std::max(v, amp * detail::smoothstep_band(y - depth, p.pleura_thickness / 2.0));
        }
        if (y > pleura) {
          for (std::size_t i = 0; i < p.bline_x.size(); ++i) {
            const double fade = 1.0 - 0.35 * (y - pleura) / kFrameSize;
            v = std::max(v, p.bline_intensity * fade * detail::smoothstep_band(x - p.bline_x[i], p.bline_width[i] / 2.0));
          }
        }
      } else {
        const double arc = detail::arc_y(p, x);
        if (y > arc) v = p.below_level * p.tissue_level;
        if (p.effusion_height > 0.0 && y < arc && y > arc - p.effusion_height) v = p.effusion_level * p.tissue_level;
        v = std::max(v, p.arc_intensity * detail::smoothstep_band(y - arc, p.arc_thickness / 2.0));
      }
      img.at(y, x) = static_cast<float>(v);
    }
  }
  return img;
}

/// Applies depth attenuation, gain and spatially correlated multiplicative speckle.
template <RandomStream R>
Image render_frame(const FrameParams& p, double noise_level, R& rng) {
  Image img = render_clean(p);
  Image noise(kFrameSize, kFrameSize);
  for (float& n : noise.pixels) n = static_cast<float>(normal(rng));
  for (int y = 0; y < kFrameSize; ++y) {
    const double att = std::exp(-p.attenuation * y / kFrameSize);
    for (int x = 0; x < kFrameSize; ++x) {
      // 2x2 correlated speckle, rescaled to unit variance
      const int y1 = std::min(y + 1, kFrameSize - 1);
      const int x1 = std::min(x + 1, kFrameSize - 1);
      const double n = 0.5 * (noise.at(y, x) + noise.at(y1, x) + noise.at(y, x1) + noise.at(y1, x1));
      const double v = img.at(y, x) * p.gain * att * std::max(0.0, 1.0 + noise_level * n);
      img.at(y, x) = clip01(static_cast<float>(v));
    }
  }
  return img;
}

struct SyntheticSample {
  Dataset dataset;
  std::vector<FrameParams> params;  ///< parallel to dataset records
};

/// Generates a dataset together with the per-frame rendering parameters.
inline SyntheticSample generate_synthetic_with_params(const SyntheticConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, 0x5e7));
  std::vector<int> patient_order(static_cast<std::size_t>(cfg.n_patients));
  for (int i = 0; i < cfg.n_patients; ++i) patient_order[static_cast<std::size_t>(i)] = i;
  shuffle(patient_order, rng);
  const auto n_unlabelled = static_cast<int>(std::llround(cfg.unlabelled_fraction * cfg.n_patients));
  std::vector<bool> stripped(static_cast<std::size_t>(cfg.n_patients), false);
  for (int i = 0; i < n_unlabelled; ++i) stripped[static_cast<std::size_t>(patient_order[static_cast<std::size_t>(i)])] = true;

  std::vector<ImageRecord> records;
  std::vector<FrameParams> params;
  char buf[64];
  for (int pi = 0; pi < cfg.n_patients; ++pi) {
    Rng prng(derive_seed(cfg.seed, 0xa7, static_cast<std::uint64_t>(pi)));
    const double patient_gain = uniform(prng, 0.75, 1.25);
    const double patient_tissue = uniform(prng, 0.22, 0.38);
    std::snprintf(buf, sizeof buf, "p%04d", pi);
    const std::string patient_id = buf;
    for (int vi = 0; vi < cfg.videos_per_patient; ++vi) {
      const int view = bernoulli(prng, cfg.pleural_prior) ? kPleural : kParenchymal;
      const int leaf = bernoulli(prng, view == kParenchymal ? cfg.blines_prior : cfg.effusion_prior) ? 1 : 0;
      const FrameParams base = detail::draw_video_params(view, leaf, patient_gain, patient_tissue, prng);
      std::snprintf(buf, sizeof buf, "%s_v%02d", patient_id.c_str(), vi);
      const std::string video_id = buf;
      for (int fi = 0; fi < cfg.frames_per_video; ++fi) {
        FrameParams fp = detail::perturb(base, prng);
        ImageRecord r;
        std::snprintf(buf, sizeof buf, "%s_f%03d", video_id.c_str(), fi);
        r.image_id = buf;
        r.patient_id = patient_id;
        r.video_id = video_id;
        r.frame_index = fi;
        r.pixels = std::make_shared<const Image>(render_frame(fp, cfg.noise_level, prng));
        if (!stripped[static_cast<std::size_t>(pi)]) {
          r.label(Task::view) = fp.view;
          if (fp.view == kParenchymal)
            r.label(Task::ab) = fp.ab_class();
          else
            r.label(Task::pe) = fp.pe_class();
        }
        records.push_back(std::move(r));
        params.push_back(std::move(fp));
      }
    }
  }
  return {Dataset("synthetic", std::move(records)), std::move(params)};
}

inline Dataset generate_synthetic(const SyntheticConfig& cfg) { return generate_synthetic_with_params(cfg).dataset; }

}  // namespace lussl
