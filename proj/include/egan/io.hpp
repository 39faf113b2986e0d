#pragma once

// File formats: CSV (header row, %.17g round-trip precision), 8-bit binary
// PGM heatmaps, and the flat-binary + JSON-manifest parameter checkpoint.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "egan/errors.hpp"
#include "egan/nn.hpp"
#include "egan/synthetic.hpp"

namespace egan::io {

using json = nlohmann::json;

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("write failed: " + path);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return s;
}

inline void write_samples_csv(const std::string& path,
                              const std::vector<synth::Point2>& pts) {
  std::string out = "x,y\n";
  for (const auto& p : pts) out += fmt(p.x) + "," + fmt(p.y) + "\n";
  write_file(path, out);
}

inline void write_grid_csv(const std::string& path, const synth::Grid2D& g) {
  g.validate_spec();
  std::string out = "x,y,value\n";
  for (std::size_t iy = 0; iy < g.ny; ++iy)
    for (std::size_t ix = 0; ix < g.nx; ++ix)
      out += fmt(g.x_center(ix)) + "," + fmt(g.y_center(iy)) + "," + fmt(g.at(ix, iy)) + "\n";
  write_file(path, out);
}

/// Min-max normalized 8-bit grayscale; the top image row is the y_max edge.
inline void write_grid_pgm(const std::string& path, const synth::Grid2D& g) {
  g.validate_spec();
  if (g.values.size() != g.cells()) throw IoError("write_grid_pgm: grid has no values");
  const auto [mn_it, mx_it] = std::minmax_element(g.values.begin(), g.values.end());
  const double mn = *mn_it, mx = *mx_it;
  const double span = mx > mn ? mx - mn : 1.0;
  std::string out = "P5\n" + std::to_string(g.nx) + " " + std::to_string(g.ny) + "\n255\n";
  for (std::size_t iy = g.ny; iy-- > 0;)
    for (std::size_t ix = 0; ix < g.nx; ++ix) {
      const double v = (g.at(ix, iy) - mn) / span;
      out.push_back(static_cast<char>(static_cast<unsigned char>(
          std::clamp(v * 255.0 + 0.5, 0.0, 255.0))));
    }
  write_file(path, out);
}

struct GradFieldRecord {
  synth::Point2 pos;
  synth::Point2 disc_grad;
  synth::Point2 entropy_grad;
  synth::Point2 total() const {
    return {disc_grad.x + entropy_grad.x, disc_grad.y + entropy_grad.y};
  }
};

inline void write_gradfield_csv(const std::string& path,
                                const std::vector<GradFieldRecord>& recs) {
  std::string out = "x,y,disc_dx,disc_dy,ent_dx,ent_dy,sum_dx,sum_dy\n";
  for (const auto& r : recs) {
    const auto t = r.total();
    out += fmt(r.pos.x) + "," + fmt(r.pos.y) + "," + fmt(r.disc_grad.x) + "," +
           fmt(r.disc_grad.y) + "," + fmt(r.entropy_grad.x) + "," + fmt(r.entropy_grad.y) +
           "," + fmt(t.x) + "," + fmt(t.y) + "\n";
  }
  write_file(path, out);
}

// ---------------------------------------------------------------------------
// checkpoint container: <file>.bin holds the raw doubles of every parameter
// (concatenated in manifest order); <file>.json maps name -> shape + offset.
// ---------------------------------------------------------------------------

inline void save_checkpoint(const std::map<std::string, const nn::ParamSet*>& nets,
                            const std::string& bin_path, const std::string& manifest_path) {
  json manifest;
  manifest["params"] = json::object();
  std::string blob;
  std::size_t offset = 0;
  for (const auto& [prefix, ps] : nets) {
    for (const auto& [name, p] : ps->params) {
      const std::string full = prefix.empty() ? name : prefix + "." + name;
      manifest["params"][full] = {
          {"shape", p.value.shape},
          {"offset", offset},
          {"trainable", p.trainable},
      };
      blob.append(reinterpret_cast<const char*>(p.value.data.data()),
                  p.value.numel() * sizeof(double));
      offset += p.value.numel();
    }
  }
  manifest["total_doubles"] = offset;
  write_file(bin_path, blob);
  write_file(manifest_path, manifest.dump(2) + "\n");
}

inline void load_checkpoint(const std::map<std::string, nn::ParamSet*>& nets,
                            const std::string& bin_path, const std::string& manifest_path) {
  json manifest;
  try {
    manifest = json::parse(read_file(manifest_path));
  } catch (const json::exception& e) {
    throw IoError("checkpoint manifest parse error: " + std::string(e.what()));
  }
  const std::string blob = read_file(bin_path);
  if (!manifest.contains("total_doubles") || !manifest.contains("params"))
    throw IoError("checkpoint manifest missing fields");
  if (blob.size() != manifest["total_doubles"].get<std::size_t>() * sizeof(double))
    throw IoError("checkpoint binary size does not match manifest");

  for (const auto& [prefix, ps] : nets) {
    for (auto& [name, p] : ps->params) {
      const std::string full = prefix.empty() ? name : prefix + "." + name;
      if (!manifest["params"].contains(full))
        throw IoError("checkpoint missing parameter: " + full);
      const auto& entry = manifest["params"][full];
      const auto shape = entry["shape"].get<std::vector<std::size_t>>();
      if (shape != p.value.shape) throw IoError("checkpoint shape mismatch for " + full);
      const std::size_t offset = entry["offset"].get<std::size_t>();
      if ((offset + p.value.numel()) * sizeof(double) > blob.size())
        throw IoError("checkpoint offset out of range for " + full);
      std::memcpy(p.value.data.data(), blob.data() + offset * sizeof(double),
                  p.value.numel() * sizeof(double));
    }
  }
}

}  // namespace egan::io
