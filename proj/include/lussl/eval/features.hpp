#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "lussl/core/error.hpp"
#include "lussl/data/dataset.hpp"
#include "lussl/data/manifest.hpp"
#include "lussl/nnet/extractor.hpp"
#include "lussl/supervised/protocol.hpp"

namespace lussl::eval {

/// Writes `image_id,view_label,ab_label,pe_label,f0..f{D-1}`, one row per
/// record in dataset order. Floats use 9 significant digits so they round
/// trip exactly.
inline void export_features(const nn::FeatureExtractor<float>& extractor, const Dataset& data,
                            const std::filesystem::path& path) {
  const auto features = supervised::extract_features(extractor, data);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write feature table '" + path.string() + "'");
  out << "image_id,view_label,ab_label,pe_label";
  for (int d = 0; d < extractor.feature_dim(); ++d) out << ",f" << d;
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& r = data[i];
    out << r.image_id << ',' << format_label(r.label(Task::view)) << ',' << format_label(r.label(Task::ab)) << ','
        << format_label(r.label(Task::pe));
    for (Eigen::Index d = 0; d < features.cols(); ++d) {
      std::snprintf(buf, sizeof buf, ",%.9g", static_cast<double>(features(static_cast<Eigen::Index>(i), d)));
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw Error("failed writing feature table '" + path.string() + "'");
}

}  // namespace lussl::eval
