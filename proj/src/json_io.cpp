#include "qvlm/json_io.hpp"

#include "qvlm/error.hpp"

namespace qvlm {

using nlohmann::json;

namespace {

json ring_json(const Ring& ring) {
  json out = json::array();
  for (const auto& v : ring) out.push_back({v.x(), v.y()});
  return out;
}

Ring ring_from(const json& j) {
  Ring ring;
  ring.reserve(j.size());
  for (const json& v : j) ring.emplace_back(v.at(0).get<int>(), v.at(1).get<int>());
  return ring;
}

}  // namespace

json to_json(const Shape& s) {
  json holes = json::array();
  for (const Ring& h : s.holes) holes.push_back(ring_json(h));
  json runs = json::array();
  for (const Run& r : s.pixels.runs()) runs.push_back({r.y, r.x0, r.x1});
  json j = {{"id", s.id},
            {"class_type", s.class_type},
            {"area_pixels", s.area_pixels},
            {"area_hectares", s.area_hectares},
            {"polygon", ring_json(s.polygon)},
            {"holes", holes},
            {"bbox", {s.bbox.xmin, s.bbox.ymin, s.bbox.xmax, s.bbox.ymax}},
            {"runs", runs}};
  if (s.provenance) j["provenance"] = *s.provenance;
  if (s.distance_meters) j["distance_meters"] = *s.distance_meters;
  return j;
}

Shape shape_from_json(const json& j) {
  try {
    Shape s;
    s.id = j.at("id").get<int>();
    s.class_type = j.at("class_type").get<std::string>();
    s.area_pixels = j.at("area_pixels").get<std::int64_t>();
    s.area_hectares = j.at("area_hectares").get<double>();
    s.polygon = ring_from(j.at("polygon"));
    for (const json& h : j.value("holes", json::array())) s.holes.push_back(ring_from(h));
    const json& b = j.at("bbox");
    s.bbox = {b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(), b.at(3).get<int>()};
    std::vector<Run> runs;
    for (const json& r : j.at("runs"))
      runs.push_back({r.at(0).get<int>(), r.at(1).get<int>(), r.at(2).get<int>()});
    s.pixels = PixelSet::from_runs(std::move(runs));
    if (s.pixels.size() != s.area_pixels)
      fail(ErrorCode::Structural, "shape " + std::to_string(s.id) + ": runs disagree with area_pixels");
    if (j.contains("provenance")) s.provenance = j["provenance"].get<int>();
    if (j.contains("distance_meters")) s.distance_meters = j["distance_meters"].get<double>();
    return s;
  } catch (const json::exception& e) {
    fail(ErrorCode::Structural, std::string("malformed shape: ") + e.what());
  }
}

json to_json(const SegmentationResult& r) {
  json shapes = json::array();
  for (const Shape& s : r.shapes) shapes.push_back(to_json(s));
  return {{"shapes", shapes},
          {"image_width", r.image_width},
          {"image_height", r.image_height},
          {"total_pixels", r.total_pixels}};
}

SegmentationResult segmentation_from_json(const json& j, double gsd) {
  SegmentationResult r;
  try {
    for (const json& s : j.at("shapes")) r.shapes.push_back(shape_from_json(s));
    r.image_width = j.at("image_width").get<int>();
    r.image_height = j.at("image_height").get<int>();
    r.total_pixels = j.at("total_pixels").get<std::int64_t>();
  } catch (const json::exception& e) {
    fail(ErrorCode::Structural, std::string("malformed segmentation response: ") + e.what());
  }
  r.gsd = gsd;
  return r;
}

}  // namespace qvlm
