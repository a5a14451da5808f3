#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lussl/core/error.hpp"
#include "lussl/data/dataset.hpp"
#include "lussl/data/image.hpp"
#include "lussl/data/png_io.hpp"

namespace lussl {

inline constexpr std::string_view kManifestHeader =
    "image_path,patient_id,video_id,frame_index,view_label,ab_label,pe_label";

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

inline std::optional<int> parse_label_cell(const std::string& cell, std::size_t row, const char* column) {
  if (cell.empty()) return std::nullopt;
  int v = 0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc{} || ptr != cell.data() + cell.size() || (v != 0 && v != 1))
    throw DataError("manifest row " + std::to_string(row) + ": " + column + " must be empty, 0 or 1");
  return v;
}

}  // namespace detail

/// Reads a manifest. Image paths are resolved relative to the manifest's
/// directory; each image is passed through `preprocess`. The image_id of a
/// record is its image_path cell verbatim. Row numbers in errors count the
/// header as row 1.
inline Dataset load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("manifest not found: '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("manifest '" + path.string() + "' is empty (missing header)");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  if (line != kManifestHeader)
    throw DataError("manifest row 1: header must be '" + std::string(kManifestHeader) + "'");

  const auto base = path.parent_path();
  std::vector<ImageRecord> records;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != 7)
      throw DataError("manifest row " + std::to_string(row) + ": expected 7 columns, got " + std::to_string(cells.size()));
    ImageRecord r;
    r.image_id = cells[0];
    r.patient_id = cells[1];
    r.video_id = cells[2];
    if (r.image_id.empty() || r.patient_id.empty() || r.video_id.empty())
      throw DataError("manifest row " + std::to_string(row) + ": image_path, patient_id and video_id are required");
    const auto [ptr, ec] = std::from_chars(cells[3].data(), cells[3].data() + cells[3].size(), r.frame_index);
    if (ec != std::errc{} || ptr != cells[3].data() + cells[3].size() || r.frame_index < 0)
      throw DataError("manifest row " + std::to_string(row) + ": frame_index must be a non-negative integer");
    r.label(Task::view) = detail::parse_label_cell(cells[4], row, "view_label");
    r.label(Task::ab) = detail::parse_label_cell(cells[5], row, "ab_label");
    r.label(Task::pe) = detail::parse_label_cell(cells[6], row, "pe_label");
    if (r.label(Task::ab) && r.label(Task::view) != kParenchymal)
      throw DataError("manifest row " + std::to_string(row) + ": ab_label requires view_label=0 (parenchymal)");
    if (r.label(Task::pe) && r.label(Task::view) != kPleural)
      throw DataError("manifest row " + std::to_string(row) + ": pe_label requires view_label=1 (pleural)");
    const auto image_path = base / r.image_id;
    if (!std::filesystem::exists(image_path))
      throw DataError("manifest row " + std::to_string(row) + ": image '" + image_path.string() + "' does not exist");
    r.pixels = std::make_shared<const Image>(preprocess(read_png_gray(image_path)));
    records.push_back(std::move(r));
  }
  return Dataset(path.stem().string(), std::move(records));
}

inline std::string format_label(const std::optional<int>& l) { return l ? std::to_string(*l) : std::string(); }

/// Writes `dataset` as manifest.csv plus images/<image_id>.png under `dir`.
/// Returns the manifest path.
inline std::filesystem::path export_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  const auto manifest = dir / "manifest.csv";
  std::ofstream out(manifest, std::ios::binary);
  if (!out) throw Error("cannot write manifest '" + manifest.string() + "'");
  out << kManifestHeader << '\n';
  for (const auto& r : dataset) {
    const std::string rel = "images/" + r.image_id + ".png";
    write_png_gray(dir / rel, *r.pixels);
    out << rel << ',' << r.patient_id << ',' << r.video_id << ',' << r.frame_index << ','
        << format_label(r.label(Task::view)) << ',' << format_label(r.label(Task::ab)) << ','
        << format_label(r.label(Task::pe)) << '\n';
  }
  if (!out) throw Error("failed writing manifest '" + manifest.string() + "'");
  return manifest;
}

}  // namespace lussl
