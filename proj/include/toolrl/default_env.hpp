#pragma once

// The shipped environment: six degradations, six tasks, thirteen tools and
// six metrics (three fidelity, three perceptual). configs/default.json is the
// serialized form of default_env_config() and is pinned by a regression test.

#include <initializer_list>
#include <string>

#include "toolrl/env.hpp"

namespace toolrl {

namespace deg {
inline constexpr int noise = 0;
inline constexpr int motion_blur = 1;
inline constexpr int defocus_blur = 2;
inline constexpr int haze = 3;
inline constexpr int darkness = 4;
inline constexpr int low_resolution = 5;
}  // namespace deg

// Appearance channels.
namespace look {
inline constexpr int texture = 0;
inline constexpr int sharpening = 1;
inline constexpr int contrast = 2;
}  // namespace look

struct MatrixEntry {
  int row;
  int col;
  double value;
};

struct VectorEntry {
  int index;
  double value;
};

/// Identity plus overrides for A and C, zero plus overrides for b and e.
inline ToolSpec make_tool(std::string name, int task, int D, std::initializer_list<MatrixEntry> a,
                          std::initializer_list<VectorEntry> b, std::initializer_list<MatrixEntry> c,
                          std::initializer_list<VectorEntry> e, double cost_ms) {
  ToolSpec t;
  t.name = std::move(name);
  t.task = task;
  t.A = Matrix::Identity(D, D);
  t.b = Vector::Zero(D);
  t.C = Matrix::Identity(D, D);
  t.e = Vector::Zero(D);
  for (auto [r, col, v] : a) t.A(r, col) = v;
  for (auto [i, v] : b) t.b[i] = v;
  for (auto [r, col, v] : c) t.C(r, col) = v;
  for (auto [i, v] : e) t.e[i] = v;
  t.exec_cost_ms = cost_ms;
  return t;
}

inline Vector make_vector(int D, double fill, std::initializer_list<VectorEntry> entries = {}) {
  Vector v = Vector::Constant(D, fill);
  for (auto [i, x] : entries) v[i] = x;
  return v;
}

inline EnvConfig default_env_config() {
  using namespace deg;
  using namespace look;
  EnvConfig cfg;
  const int D = 6;
  cfg.num_degradations = D;
  cfg.degradation_names = {"noise", "motion_blur", "defocus_blur", "haze", "darkness", "low_resolution"};
  cfg.appearance_names = {"texture", "sharpening", "contrast", "saturation", "grain", "halo"};
  cfg.max_horizon = 8;
  cfg.clip_max = 2.0;
  cfg.init = {1, 3, 0.3, 1.5};

  cfg.tasks = {{"denoise", noise},  {"motion_deblur", motion_blur}, {"defocus_deblur", defocus_blur},
               {"dehaze", haze},    {"low_light", darkness},        {"super_resolution", low_resolution}};

  // Each tool removes its target but disturbs other components: deconvolution,
  // brightening, dehazing and upscaling amplify noise, aggressive denoising
  // softens edges. Apart from plain denoising every tool also leaves a small
  // fixed artifact, so running it on an already clean component never helps.
  // The "sharp"/"generative"/"gan" variants inflate appearance channels that
  // some perceptual metrics reward.
  cfg.tools = {
      make_tool("denoise_classic", 0, D, {{noise, noise, 0.0}}, {{defocus_blur, 0.02}}, {{texture, texture, 0.5}}, {}, 4.0),
      make_tool("denoise_strong", 0, D, {{noise, noise, 0.0}, {defocus_blur, noise, 0.20}}, {},
                {{texture, texture, 0.2}, {sharpening, sharpening, 0.5}}, {}, 6.0),
      make_tool("denoise_generative", 0, D, {{noise, noise, 0.0}}, {{low_resolution, 0.07}}, {}, {{texture, 0.30}},
                9.0),
      make_tool("motion_deblur_classic", 1, D, {{motion_blur, motion_blur, 0.0}, {noise, motion_blur, 0.20}},
                {{noise, 0.05}}, {}, {}, 5.0),
      make_tool("motion_deblur_sharp", 1, D, {{motion_blur, motion_blur, 0.0}, {noise, motion_blur, 0.10}},
                {{noise, 0.08}, {defocus_blur, 0.03}}, {}, {{sharpening, 0.30}}, 7.0),
      make_tool("defocus_deblur_classic", 2, D, {{defocus_blur, defocus_blur, 0.0}, {noise, defocus_blur, 0.20}},
                {{noise, 0.05}}, {}, {}, 5.0),
      make_tool("defocus_deblur_sharp", 2, D, {{defocus_blur, defocus_blur, 0.0}, {noise, defocus_blur, 0.10}},
                {{noise, 0.08}, {motion_blur, 0.03}}, {}, {{sharpening, 0.30}}, 7.0),
      make_tool("dehaze_classic", 3, D, {{haze, haze, 0.0}, {noise, haze, 0.15}}, {{darkness, 0.05}}, {},
                {{contrast, 0.05}}, 3.0),
      make_tool("dehaze_contrast", 3, D, {{haze, haze, 0.0}, {noise, haze, 0.05}}, {{darkness, 0.08}}, {},
                {{contrast, 0.30}}, 3.0),
      make_tool("low_light_classic", 4, D, {{darkness, darkness, 0.0}, {noise, darkness, 0.30}, {noise, noise, 1.3}},
                {{noise, 0.05}}, {}, {}, 3.0),
      make_tool("low_light_gentle", 4, D, {{darkness, darkness, 0.0}, {noise, darkness, 0.15}, {noise, noise, 1.1}},
                {{noise, 0.08}}, {}, {{contrast, 0.15}}, 3.0),
      make_tool("super_resolution_classic", 5, D,
                {{low_resolution, low_resolution, 0.0}, {noise, noise, 1.3}, {defocus_blur, low_resolution, 0.10}},
                {{defocus_blur, 0.05}}, {}, {}, 8.0),
      make_tool("super_resolution_gan", 5, D, {{low_resolution, low_resolution, 0.0}, {noise, noise, 1.4}},
                {{noise, 0.10}, {motion_blur, 0.03}}, {}, {{texture, 0.35}, {sharpening, 0.20}}, 12.0),
  };

  auto fidelity = [D](std::string name, MetricFormula f) {
    MetricDef m;
    m.name = std::move(name);
    m.kind = MetricKind::Fidelity;
    m.formula = f;
    m.d_weights = Vector::Ones(D);
    m.p_gain = Vector::Zero(D);
    m.p_penalty = Vector::Zero(D);
    return m;
  };
  auto perceptual = [D](std::string name, Vector decay, Vector gain_w, Vector penalty_w, double base, double gain,
                        double penalty) {
    MetricDef m;
    m.name = std::move(name);
    m.kind = MetricKind::Perceptual;
    m.formula = MetricFormula::Perceptual;
    m.d_weights = std::move(decay);
    m.p_gain = std::move(gain_w);
    m.p_penalty = std::move(penalty_w);
    m.base = base;
    m.gain = gain;
    m.penalty = penalty;
    return m;
  };

  // The perceptual metrics reward inflated appearance. clipiqa_like barely
  // reads d and is penalized by texture and sharpening, so its spread across
  // rollouts is small and comes almost entirely from tool choice.
  cfg.metrics = {
      fidelity("psnr_like", MetricFormula::ExpL2),
      fidelity("ssim_like", MetricFormula::InvL1),
      fidelity("lpips_like", MetricFormula::OneMinusMax),
      perceptual("musiq_like",
                 make_vector(D, 0.45, {{motion_blur, 0.75}, {defocus_blur, 0.75}, {low_resolution, 0.75}}),
                 make_vector(D, 0.0, {{texture, 1.5}, {sharpening, 0.8}}), make_vector(D, 0.0), 0.7, 0.3, 0.0),
      perceptual("maniqa_like", make_vector(D, 0.45, {{noise, 0.75}, {motion_blur, 0.6}, {defocus_blur, 0.6}}),
                 make_vector(D, 0.0, {{sharpening, 1.5}, {contrast, 0.8}}), make_vector(D, 0.0), 0.7, 0.3, 0.0),
      perceptual("clipiqa_like", make_vector(D, 0.05), make_vector(D, 0.0, {{contrast, 1.0}}),
                 make_vector(D, 0.0, {{texture, 1.0}, {sharpening, 1.0}}), 0.6, 0.05, 0.2),
  };
  return cfg;
}

}  // namespace toolrl
