// SPDX-License-Identifier: Apache-2.0
//
// SVG stick figures for frame sequences: body and hand bones, facial
// landmarks as dots, AU intensities as a bar strip underneath.

#pragma once

#include <algorithm>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "dualsign/dataset.hpp"

namespace dualsign {

/// Bone list for the 50-joint manual layout (8 body joints, then two 21-joint
/// hands rooted at the wrists).
inline std::vector<std::pair<std::size_t, std::size_t>> manual_bones() {
  std::vector<std::pair<std::size_t, std::size_t>> bones = {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {1, 5}, {5, 6}, {6, 7}};
  for (std::size_t hand = 0; hand < 2; ++hand) {
    const std::size_t base = 8 + hand * 21;
    for (std::size_t finger = 0; finger < 5; ++finger) {
      std::size_t prev = base;
      for (std::size_t seg = 0; seg < 4; ++seg) {
        const std::size_t j = base + 1 + finger * 4 + seg;
        bones.emplace_back(prev, j);
        prev = j;
      }
    }
  }
  return bones;
}

/// One frame as a standalone SVG document. `values` are raw (denormalized).
inline std::string render_frame_svg(std::span<const double> values, const ChannelLayout& layout) {
  if (values.size() != layout.width()) throw DimensionError("render: frame width does not match layout");
  constexpr double kWidth = 260, kFigure = 210, kStrip = 50;
  std::string svg;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%g\" height=\"%g\" viewBox=\"0 0 %g %g\">\n",
                kWidth, kFigure + kStrip, kWidth, kFigure + kStrip);
  svg += buf;
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  const std::size_t joints = layout.manual / 3;
  auto joint = [&](std::size_t j) { return std::pair{values[j * 3], values[j * 3 + 1]}; };
  if (joints == 50) {
    svg += "<g stroke=\"#1f4e79\" stroke-width=\"2\" stroke-linecap=\"round\">\n";
    for (const auto& [a, b] : manual_bones()) {
      const auto [x1, y1] = joint(a);
      const auto [x2, y2] = joint(b);
      std::snprintf(buf, sizeof buf, "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\"/>\n", x1, y1, x2, y2);
      svg += buf;
    }
    svg += "</g>\n";
  }
  svg += "<g fill=\"#1f4e79\">\n";
  for (std::size_t j = 0; j < joints; ++j) {
    const auto [x, y] = joint(j);
    std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"1.6\"/>\n", x, y);
    svg += buf;
  }
  svg += "</g>\n";

  if (layout.landmarks > 0) {
    svg += "<g fill=\"#c0504d\">\n";
    for (std::size_t i = 0; i < layout.landmarks; ++i) {
      const std::size_t c = layout.landmark_begin() + i * layout.landmark_coords;
      std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"0.8\"/>\n", values[c], values[c + 1]);
      svg += buf;
    }
    svg += "</g>\n";
  }

  if (layout.aus > 0) {
    const double bar = kWidth / static_cast<double>(layout.aus);
    svg += "<g fill=\"#9bbb59\">\n";
    for (std::size_t j = 0; j < layout.aus; ++j) {
      const double v = std::clamp(values[layout.au_begin() + j], 0.0, ChannelLayout::kAuMax);
      const double h = (kStrip - 4) * v / ChannelLayout::kAuMax;
      std::snprintf(buf, sizeof buf, "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\"/>\n",
                    static_cast<double>(j) * bar + 1, kFigure + kStrip - h, bar - 2, h);
      svg += buf;
    }
    svg += "</g>\n";
  }
  svg += "</svg>\n";
  return svg;
}

/// Every `stride`-th frame rendered, paired with its frame index.
inline std::vector<std::pair<std::size_t, std::string>> render_sequence(const Frames& frames, const ChannelLayout& layout,
                                                                       std::size_t stride = 1) {
  if (stride == 0) throw ContractError("render: stride must be positive");
  std::vector<std::pair<std::size_t, std::string>> out;
  for (std::size_t t = 0; t < frames.length; t += stride) out.emplace_back(t, render_frame_svg(frames.row(t), layout));
  return out;
}

}  // namespace dualsign
