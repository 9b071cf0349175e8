// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <sstream>

#include "json.hpp"

#include "porc/error.hpp"
#include "porc/slide/tissue.hpp"
#include "porc/util/random.hpp"

namespace porc::slide {

bool patches_overlap(const PatchRef& a, const PatchRef& b) {
  if (a.slide != b.slide) return false;
  return a.x < b.x + b.side && b.x < a.x + a.side && a.y < b.y + b.side && b.y < a.y + a.side;
}

std::vector<PatchRef> sample_patches(const SlideContainer& slide, const TissueMask& mask, std::size_t cap,
                                     std::uint32_t side, std::uint64_t seed) {
  if (cap < 1) throw data_error("sample_patches: cap must be >= 1");
  const std::uint32_t ts = slide.tile_size();
  if (side == 0 || (ts % side != 0 && side % ts != 0)) {
    throw data_error("sample_patches: patch side " + std::to_string(side) + " and tile size " + std::to_string(ts) +
                     " must divide one another");
  }
  if (mask.tiles_x != slide.tiles_x() || mask.tiles_y != slide.tiles_y()) {
    throw data_error("sample_patches: mask grid does not match slide tiles");
  }
  const std::uint32_t cells_x = slide.width() / side, cells_y = slide.height() / side;

  std::vector<std::size_t> candidates;
  for (std::uint32_t cy = 0; cy < cells_y; ++cy)
    for (std::uint32_t cx = 0; cx < cells_x; ++cx) {
      const std::uint32_t x0 = cx * side, y0 = cy * side;
      // Every tile touched by the cell must be tissue.
      bool ok = true;
      for (std::uint32_t ty = y0 / ts; ok && ty <= (y0 + side - 1) / ts; ++ty)
        for (std::uint32_t tx = x0 / ts; ok && tx <= (x0 + side - 1) / ts; ++tx) ok = mask.at(tx, ty);
      if (ok) candidates.push_back(static_cast<std::size_t>(cy) * cells_x + cx);
    }

  const std::size_t take = std::min(cap, candidates.size());
  Rng rng(seed);
  for (std::size_t i = 0; i < take; ++i) std::swap(candidates[i], candidates[i + rng.below(candidates.size() - i)]);
  candidates.resize(take);
  std::sort(candidates.begin(), candidates.end());

  std::vector<PatchRef> out;
  out.reserve(take);
  for (std::size_t c : candidates) {
    PatchRef p;
    p.slide = slide.id();
    p.x = static_cast<std::uint32_t>(c % cells_x) * side;
    p.y = static_cast<std::uint32_t>(c / cells_x) * side;
    p.side = side;
    p.mag = slide.magnification();
    out.push_back(std::move(p));
  }
  return out;
}

std::string manifest_to_jsonl(const std::vector<ManifestEntry>& entries) {
  std::string out;
  for (const auto& e : entries) {
    nlohmann::json j = {{"id", e.id},         {"slide", e.patch.slide}, {"x", e.patch.x},
                        {"y", e.patch.y},     {"side", e.patch.side},   {"mag", to_string(e.patch.mag)}};
    if (e.label) j["label"] = *e.label;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<ManifestEntry> manifest_from_jsonl(const std::string& text) {
  std::vector<ManifestEntry> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ManifestEntry e;
      e.id = j.at("id").get<std::string>();
      e.patch.slide = j.at("slide").get<std::string>();
      e.patch.x = j.at("x").get<std::uint32_t>();
      e.patch.y = j.at("y").get<std::uint32_t>();
      e.patch.side = j.at("side").get<std::uint32_t>();
      e.patch.mag = magnification_from_string(j.at("mag").get<std::string>());
      if (e.patch.side == 0) throw data_error("side must be positive");
      if (j.contains("label") && !j["label"].is_null()) e.label = j["label"].get<int>();
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw data_error("manifest line " + std::to_string(lineno) + ": " + ex.what());
    } catch (const data_error& ex) {
      throw data_error("manifest line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return out;
}

}  // namespace porc::slide
