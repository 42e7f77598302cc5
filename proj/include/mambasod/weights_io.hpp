#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mambasod/params.hpp"
#include "mambasod/tensor.hpp"

// Weight container: "<stem>.bin" holds every array as little-endian float64,
// concatenated in visit order; "<stem>.manifest" is text with one line per
// array: name <TAB> shape (e.g. 96x3x4x4) <TAB> element offset <TAB> count.

namespace mambasod {

static_assert(std::endian::native == std::endian::little, "weight container assumes a little-endian host");

class WeightsFormatError : public std::runtime_error {
 public:
  explicit WeightsFormatError(const std::string& what) : std::runtime_error(what) {}
};

struct ManifestEntry {
  std::string name;
  Shape shape;
  std::size_t offset = 0;
  std::size_t count = 0;
};

inline constexpr const char* kManifestMagic = "# mambasod-weights v1";

inline std::string shape_token(const Shape& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(shape[i]);
  }
  return s;
}

inline Shape parse_shape_token(const std::string& token) {
  Shape shape;
  std::stringstream ss(token);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    if (part.empty() || part.find_first_not_of("0123456789") != std::string::npos) {
      throw WeightsFormatError("bad shape token '" + token + "'");
    }
    shape.push_back(std::stoull(part));
  }
  if (shape.empty()) throw WeightsFormatError("empty shape token");
  return shape;
}

template <class W>
std::vector<ManifestEntry> build_manifest(const W& weights) {
  std::vector<ManifestEntry> entries;
  std::size_t offset = 0;
  visit_params(weights, "", [&](const std::string& name, const Tensor& t, ParamKind) {
    entries.push_back({name, t.shape(), offset, t.size()});
    offset += t.size();
  });
  return entries;
}

template <class W>
void save_weights(const W& weights, const std::string& stem) {
  const auto entries = build_manifest(weights);
  std::ofstream manifest(stem + ".manifest", std::ios::trunc);
  std::ofstream bin(stem + ".bin", std::ios::binary | std::ios::trunc);
  if (!manifest || !bin) throw WeightsFormatError("cannot open weight container '" + stem + "' for writing");
  std::size_t total = entries.empty() ? 0 : entries.back().offset + entries.back().count;
  manifest << kManifestMagic << "\n# total " << total << "\n";
  for (const auto& e : entries) manifest << e.name << '\t' << shape_token(e.shape) << '\t' << e.offset << '\t' << e.count << '\n';
  visit_params(weights, "", [&](const std::string&, const Tensor& t, ParamKind) {
    for (Real v : t.data()) {
      const auto d = static_cast<double>(v);
      bin.write(reinterpret_cast<const char*>(&d), sizeof d);
    }
  });
  if (!manifest || !bin) throw WeightsFormatError("write failed for weight container '" + stem + "'");
}

inline std::vector<ManifestEntry> read_manifest(const std::string& stem) {
  std::ifstream in(stem + ".manifest");
  if (!in) throw WeightsFormatError("cannot open manifest '" + stem + ".manifest'");
  std::string line;
  if (!std::getline(in, line) || line != kManifestMagic) throw WeightsFormatError("missing manifest header");
  std::vector<ManifestEntry> entries;
  std::size_t expected_offset = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    ManifestEntry e;
    std::string shape, offset, count;
    if (!std::getline(ss, e.name, '\t') || !std::getline(ss, shape, '\t') || !std::getline(ss, offset, '\t') ||
        !std::getline(ss, count)) {
      throw WeightsFormatError("malformed manifest line '" + line + "'");
    }
    e.shape = parse_shape_token(shape);
    e.offset = std::stoull(offset);
    e.count = std::stoull(count);
    if (e.count != shape_numel(e.shape) || e.offset != expected_offset) {
      throw WeightsFormatError("inconsistent manifest entry '" + e.name + "'");
    }
    expected_offset += e.count;
    entries.push_back(std::move(e));
  }
  return entries;
}

/// Loads a container into weights of identical structure (names and shapes must match).
template <class W>
void load_weights(W& weights, const std::string& stem) {
  const auto entries = read_manifest(stem);
  std::map<std::string, const ManifestEntry*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;

  std::ifstream bin(stem + ".bin", std::ios::binary);
  if (!bin) throw WeightsFormatError("cannot open '" + stem + ".bin'");
  std::vector<double> data;
  const std::size_t total = entries.empty() ? 0 : entries.back().offset + entries.back().count;
  data.resize(total);
  bin.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(total * sizeof(double)));
  if (static_cast<std::size_t>(bin.gcount()) != total * sizeof(double)) {
    throw WeightsFormatError("weight payload shorter than manifest total");
  }
  std::size_t matched = 0;
  visit_params(weights, "", [&](const std::string& name, Tensor& t, ParamKind) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw WeightsFormatError("manifest lacks '" + name + "'");
    if (it->second->shape != t.shape()) {
      throw WeightsFormatError("shape mismatch for '" + name + "': manifest " + shape_str(it->second->shape) +
                               " vs model " + shape_str(t.shape()));
    }
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<Real>(data[it->second->offset + i]);
    ++matched;
  });
  if (matched != entries.size()) throw WeightsFormatError("manifest has arrays the model does not use");
}

}  // namespace mambasod
