#pragma once

// Dataset ingestion and egress. VOC XML (devkit schema plus an optional
// <weight> extension) and COCO JSON (official schema plus an optional
// "weight" key) round-trip through the toolkit's continuous box convention:
// VOC 1-based inclusive pixels enter as (xmin-1, ymin-1, xmax, ymax), COCO
// [x,y,w,h] as (x, y, x+w, y+h). Augmented images are written as PNG so
// blended pixels survive exactly; manifests carry SHA-256 of every file.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <openssl/evp.h>

#include <nlohmann/json.hpp>

#include "detkit/core.hpp"
#include "detkit/eval.hpp"
#include "detkit/image_io.hpp"

namespace detkit::io {

using json = nlohmann::json;

class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

/// Shortest round-trip decimal rendering of a double; fixed notation inside
/// the human-readable magnitude range, scientific outside it.
inline std::string format_double(double v) {
  char buf[352];
  const double mag = std::abs(v);
  if (v == 0.0 || (mag >= 1e-5 && mag < 1e16)) {
    const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed);
    return std::string(buf, res.ptr);
  }
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string sha256_hex(const void* data, std::size_t len) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int dlen = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  EVP_DigestUpdate(ctx, data, len);
  EVP_DigestFinal_ex(ctx, digest, &dlen);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(dlen * 2);
  for (unsigned int i = 0; i < dlen; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << contents;
  if (!out) throw IoError("write failed: " + path);
}

inline std::string sha256_hex_file(const std::string& path) {
  const std::string contents = read_file(path);
  return sha256_hex(contents.data(), contents.size());
}

// ---- dataset index ----

struct DatasetObject {
  ObjectLabel label;
  bool difficult = false;
};

struct DatasetEntry {
  std::string image_id;
  std::string image_path;
  int width = 0;
  int height = 0;
  std::vector<DatasetObject> objects;
};

/// Class vocabulary plus per-image annotation entries. The class-name order
/// defines the dense class_id mapping.
struct DatasetIndex {
  std::vector<std::string> class_names;
  std::vector<DatasetEntry> entries;
  std::string source_format;

  int class_id(const std::string& name) const {
    for (std::size_t i = 0; i < class_names.size(); ++i)
      if (class_names[i] == name) return static_cast<int>(i);
    return -1;
  }

  void validate() const {
    std::set<std::string> seen;
    for (const auto& n : class_names)
      if (n.empty() || !seen.insert(n).second)
        throw ParseError("DatasetIndex: class names must be unique and non-empty");
    for (const auto& e : entries)
      for (const auto& o : e.objects) {
        if (o.label.class_id < 0 || o.label.class_id >= static_cast<int>(class_names.size()))
          throw ParseError("DatasetIndex: class id out of range in " + e.image_id);
        if (!(o.label.weight >= 0.0 && o.label.weight <= 1.0))
          throw ParseError("DatasetIndex: weight outside [0,1] in " + e.image_id);
      }
  }
};

inline std::vector<eval::GroundTruthRecord> to_ground_truth(const DatasetIndex& index) {
  std::vector<eval::GroundTruthRecord> out;
  for (const auto& e : index.entries)
    for (const auto& o : e.objects)
      out.push_back(eval::GroundTruthRecord{e.image_id, o.label.bbox, o.label.class_id, o.difficult});
  return out;
}

// ---- VOC XML ----

struct VocObject {
  std::string name;
  bool difficult = false;
  double weight = 1.0;
  BBox bbox;  // already in toolkit convention
};

struct VocAnnotation {
  std::string filename;
  int width = 0;
  int height = 0;
  std::vector<VocObject> objects;
};

/// Parse one VOC annotation document. Coordinates are converted from VOC's
/// 1-based inclusive pixels by (xmin-1, ymin-1, xmax, ymax).
inline VocAnnotation parse_voc_xml(const std::string& xml_text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream ss(xml_text);
    pt::read_xml(ss, tree);
  } catch (const pt::xml_parser_error& e) {
    throw ParseError(std::string("malformed XML: ") + e.what());
  }

  VocAnnotation ann;
  const auto root = tree.get_child_optional("annotation");
  if (!root) throw ParseError("missing element: annotation");
  ann.filename = root->get<std::string>("filename", "");
  const auto size = root->get_child_optional("size");
  if (!size) throw ParseError("missing element: annotation.size");
  try {
    ann.width = size->get<int>("width");
    ann.height = size->get<int>("height");
  } catch (const pt::ptree_error&) {
    throw ParseError("missing element: annotation.size.width/height");
  }
  if (ann.width < 1 || ann.height < 1) throw ParseError("invalid size in annotation.size");

  int obj_index = 0;
  for (const auto& [key, node] : *root) {
    if (key != "object") continue;
    const std::string path = "annotation.object[" + std::to_string(obj_index++) + "]";
    VocObject obj;
    const auto name = node.get_optional<std::string>("name");
    if (!name) throw ParseError("missing element: " + path + ".name");
    obj.name = *name;
    obj.difficult = node.get<int>("difficult", 0) != 0;
    obj.weight = node.get<double>("weight", 1.0);
    const auto bnd = node.get_child_optional("bndbox");
    if (!bnd) throw ParseError("missing element: " + path + ".bndbox");
    double xmin, ymin, xmax, ymax;
    try {
      xmin = bnd->get<double>("xmin");
      ymin = bnd->get<double>("ymin");
      xmax = bnd->get<double>("xmax");
      ymax = bnd->get<double>("ymax");
    } catch (const pt::ptree_error&) {
      throw ParseError("missing element: " + path + ".bndbox coordinates");
    }
    obj.bbox = BBox{xmin - 1.0, ymin - 1.0, xmax, ymax};
    if (!obj.bbox.valid()) throw ParseError("degenerate bndbox at " + path);
    ann.objects.push_back(std::move(obj));
  }
  return ann;
}

namespace detail {

inline std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

}  // namespace detail

/// Inverse of parse_voc_xml; <weight> is emitted only when it is not 1.
inline std::string write_voc_xml(const VocAnnotation& ann) {
  std::ostringstream out;
  out << "<annotation>\n";
  out << "  <folder>JPEGImages</folder>\n";
  out << "  <filename>" << detail::xml_escape(ann.filename) << "</filename>\n";
  out << "  <size>\n";
  out << "    <width>" << ann.width << "</width>\n";
  out << "    <height>" << ann.height << "</height>\n";
  out << "    <depth>3</depth>\n";
  out << "  </size>\n";
  for (const auto& obj : ann.objects) {
    out << "  <object>\n";
    out << "    <name>" << detail::xml_escape(obj.name) << "</name>\n";
    out << "    <difficult>" << (obj.difficult ? 1 : 0) << "</difficult>\n";
    if (obj.weight != 1.0) out << "    <weight>" << format_double(obj.weight) << "</weight>\n";
    out << "    <bndbox>\n";
    out << "      <xmin>" << format_double(obj.bbox.xmin + 1.0) << "</xmin>\n";
    out << "      <ymin>" << format_double(obj.bbox.ymin + 1.0) << "</ymin>\n";
    out << "      <xmax>" << format_double(obj.bbox.xmax) << "</xmax>\n";
    out << "      <ymax>" << format_double(obj.bbox.ymax) << "</ymax>\n";
    out << "    </bndbox>\n";
    out << "  </object>\n";
  }
  out << "</annotation>\n";
  return out.str();
}

// ---- COCO JSON ----

struct CocoParseResult {
  DatasetIndex index;
  std::vector<eval::GroundTruthRecord> records;
  std::map<int, int> category_to_class;  // original id -> dense 0-based id
  std::vector<std::string> warnings;
};

/// Parse a COCO annotation document. Category ids are remapped, in ascending
/// original-id order, to dense 0-based class ids. Degenerate boxes (w or h
/// <= 0) are skipped with a warning, or rejected in strict mode. iscrowd
/// annotations are mapped to the difficult flag.
inline CocoParseResult parse_coco_json(const json& doc, bool strict = false) {
  if (!doc.is_object() || !doc.contains("images") || !doc.contains("annotations") ||
      !doc.contains("categories"))
    throw ParseError("COCO document must contain images/annotations/categories arrays");

  CocoParseResult result;
  result.index.source_format = "coco";

  std::map<int, std::string> cats;
  for (const auto& c : doc.at("categories")) {
    if (!c.contains("id") || !c.contains("name")) throw ParseError("category missing id/name");
    cats[c.at("id").get<int>()] = c.at("name").get<std::string>();
  }
  for (const auto& [cid, name] : cats) {
    result.category_to_class[cid] = static_cast<int>(result.index.class_names.size());
    result.index.class_names.push_back(name);
  }

  std::map<int, std::size_t> entry_of_image;
  std::map<int, DatasetEntry> entries_by_id;
  for (const auto& im : doc.at("images")) {
    if (!im.contains("id") || !im.contains("file_name"))
      throw ParseError("image missing id/file_name");
    DatasetEntry e;
    const int id = im.at("id").get<int>();
    e.image_id = std::to_string(id);
    e.image_path = im.at("file_name").get<std::string>();
    e.width = im.value("width", 0);
    e.height = im.value("height", 0);
    entries_by_id[id] = std::move(e);
  }

  std::size_t ann_index = 0;
  for (const auto& a : doc.at("annotations")) {
    const std::string where = "annotations[" + std::to_string(ann_index++) + "]";
    if (!a.contains("image_id") || !a.contains("category_id") || !a.contains("bbox"))
      throw ParseError(where + " missing image_id/category_id/bbox");
    const int image_id = a.at("image_id").get<int>();
    const int category_id = a.at("category_id").get<int>();
    const auto eit = entries_by_id.find(image_id);
    if (eit == entries_by_id.end()) throw ParseError(where + ": unknown image_id");
    const auto cit = result.category_to_class.find(category_id);
    if (cit == result.category_to_class.end()) throw ParseError(where + ": unknown category_id");
    const auto& bb = a.at("bbox");
    if (!bb.is_array() || bb.size() != 4) throw ParseError(where + ": bbox must be [x,y,w,h]");
    const double x = bb[0].get<double>(), y = bb[1].get<double>();
    const double w = bb[2].get<double>(), h = bb[3].get<double>();
    if (w <= 0.0 || h <= 0.0) {
      if (strict) throw ParseError(where + ": non-positive box size");
      result.warnings.push_back(where + ": skipped annotation with non-positive box size");
      continue;
    }
    DatasetObject obj;
    obj.label.bbox = BBox{x, y, x + w, y + h};
    obj.label.class_id = cit->second;
    obj.label.weight = a.value("weight", 1.0);
    obj.difficult = a.value("iscrowd", 0) != 0;
    eit->second.objects.push_back(obj);
  }

  for (auto& [id, entry] : entries_by_id) {
    entry_of_image[id] = result.index.entries.size();
    result.index.entries.push_back(std::move(entry));
  }
  result.index.validate();
  result.records = to_ground_truth(result.index);
  return result;
}

/// Inverse of parse_coco_json for a dense-id index; category ids are written
/// as class_id + 1. "weight" is emitted only when it is not 1.
inline json write_coco_json(const DatasetIndex& index) {
  json doc;
  doc["images"] = json::array();
  doc["annotations"] = json::array();
  doc["categories"] = json::array();
  for (std::size_t i = 0; i < index.class_names.size(); ++i)
    doc["categories"].push_back({{"id", static_cast<int>(i) + 1}, {"name", index.class_names[i]}});
  int ann_id = 1;
  for (std::size_t i = 0; i < index.entries.size(); ++i) {
    const auto& e = index.entries[i];
    doc["images"].push_back({{"id", static_cast<int>(i)},
                             {"file_name", e.image_path},
                             {"width", e.width},
                             {"height", e.height}});
    for (const auto& o : e.objects) {
      json a = {{"id", ann_id++},
                {"image_id", static_cast<int>(i)},
                {"category_id", o.label.class_id + 1},
                {"bbox", {o.label.bbox.xmin, o.label.bbox.ymin, o.label.bbox.width(),
                          o.label.bbox.height()}},
                {"area", o.label.bbox.area()},
                {"iscrowd", o.difficult ? 1 : 0}};
      if (o.label.weight != 1.0) a["weight"] = o.label.weight;
      doc["annotations"].push_back(std::move(a));
    }
  }
  return doc;
}

// ---- dataset directory layer ----

enum class DatasetFormat { voc, coco };

inline const char* to_string(DatasetFormat f) { return f == DatasetFormat::voc ? "voc" : "coco"; }

namespace detail {

inline std::string resolve_image_path(const std::filesystem::path& root,
                                      const std::string& file_name) {
  namespace fs = std::filesystem;
  for (const char* sub : {"JPEGImages", "images", "."}) {
    const fs::path candidate = root / sub / file_name;
    if (fs::exists(candidate)) return candidate.string();
  }
  return (root / file_name).string();
}

}  // namespace detail

/// Load an annotation source: a directory is read as a VOC layout
/// (Annotations/*.xml + JPEGImages or images), a .json file as COCO. When a
/// class list is supplied it becomes the vocabulary and unknown classes are
/// rejected; otherwise the vocabulary is discovered (VOC: sorted unique names).
/// `strict` turns skip-with-warning records into errors.
inline DatasetIndex load_dataset(const std::string& path,
                                 const std::vector<std::string>& class_names = {},
                                 bool strict = false) {
  namespace fs = std::filesystem;
  const fs::path p(path);
  if (!fs::exists(p)) throw IoError("dataset path does not exist: " + path);

  if (fs::is_regular_file(p)) {
    const json doc = json::parse(read_file(path), nullptr, true);
    CocoParseResult parsed = parse_coco_json(doc, strict);
    if (!class_names.empty() && class_names != parsed.index.class_names)
      throw ParseError("provided class list does not match COCO categories in " + path);
    const fs::path root = p.parent_path().empty() ? fs::path(".") : p.parent_path();
    for (auto& e : parsed.index.entries)
      e.image_path = detail::resolve_image_path(root, e.image_path);
    return std::move(parsed.index);
  }

  const fs::path ann_dir = fs::exists(p / "Annotations") ? p / "Annotations" : p;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(ann_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".xml")
      files.push_back(entry.path());
  if (files.empty()) throw IoError("no VOC XML annotations under " + ann_dir.string());
  std::sort(files.begin(), files.end());

  std::vector<VocAnnotation> anns;
  anns.reserve(files.size());
  for (const auto& f : files) {
    try {
      anns.push_back(parse_voc_xml(read_file(f.string())));
    } catch (const ParseError& e) {
      throw ParseError(f.string() + ": " + e.what());
    }
  }

  DatasetIndex index;
  index.source_format = "voc";
  if (class_names.empty()) {
    std::set<std::string> names;
    for (const auto& a : anns)
      for (const auto& o : a.objects) names.insert(o.name);
    index.class_names.assign(names.begin(), names.end());
  } else {
    index.class_names = class_names;
  }

  for (std::size_t i = 0; i < anns.size(); ++i) {
    const auto& a = anns[i];
    DatasetEntry e;
    e.image_id = files[i].stem().string();
    e.image_path = detail::resolve_image_path(p, a.filename);
    e.width = a.width;
    e.height = a.height;
    for (const auto& o : a.objects) {
      const int cid = index.class_id(o.name);
      if (cid < 0) {
        std::string vocab;
        for (const auto& n : index.class_names) vocab += (vocab.empty() ? "" : ", ") + n;
        throw ParseError(files[i].string() + ": unknown class '" + o.name +
                         "' (vocabulary: " + vocab + ")");
      }
      e.objects.push_back(DatasetObject{ObjectLabel{o.bbox, cid, o.weight}, o.difficult});
    }
    index.entries.push_back(std::move(e));
  }
  index.validate();
  return index;
}

/// Write images plus annotations in the chosen format under out_dir and
/// return the manifest (also written as manifest.json). `extra` is merged
/// into the manifest for run metadata. Images are PNG so blended pixels
/// survive exactly; `lossy` switches to JPEG for callers that asked for it.
inline json write_dataset(const DatasetIndex& index, const std::vector<ImageBuffer>& images,
                          const std::string& out_dir, DatasetFormat format,
                          const json& extra = json::object(), bool lossy = false) {
  namespace fs = std::filesystem;
  if (images.size() != index.entries.size())
    throw std::invalid_argument("write_dataset: images and entries differ in length");
  index.validate();
  const fs::path root(out_dir);
  const std::string ext = lossy ? ".jpg" : ".png";
  std::vector<std::string> rel_paths;

  if (format == DatasetFormat::voc) {
    fs::create_directories(root / "Annotations");
    fs::create_directories(root / "JPEGImages");
    for (std::size_t i = 0; i < index.entries.size(); ++i) {
      const auto& e = index.entries[i];
      const std::string img_rel = "JPEGImages/" + e.image_id + ext;
      save_image(images[i], (root / img_rel).string());
      rel_paths.push_back(img_rel);

      VocAnnotation ann;
      ann.filename = e.image_id + ext;
      ann.width = images[i].width();
      ann.height = images[i].height();
      for (const auto& o : e.objects)
        ann.objects.push_back(
            VocObject{index.class_names[o.label.class_id], o.difficult, o.label.weight, o.label.bbox});
      const std::string xml_rel = "Annotations/" + e.image_id + ".xml";
      write_file((root / xml_rel).string(), write_voc_xml(ann));
      rel_paths.push_back(xml_rel);
    }
  } else {
    fs::create_directories(root / "images");
    DatasetIndex meta = index;
    for (std::size_t i = 0; i < index.entries.size(); ++i) {
      const auto& e = index.entries[i];
      const std::string img_rel = "images/" + e.image_id + ext;
      save_image(images[i], (root / img_rel).string());
      rel_paths.push_back(img_rel);
      meta.entries[i].image_path = e.image_id + ext;
      meta.entries[i].width = images[i].width();
      meta.entries[i].height = images[i].height();
    }
    write_file((root / "annotations.json").string(), write_coco_json(meta).dump(2) + "\n");
    rel_paths.push_back("annotations.json");
  }

  std::sort(rel_paths.begin(), rel_paths.end());
  json manifest = extra;
  manifest["format"] = to_string(format);
  manifest["files"] = json::array();
  for (const auto& rel : rel_paths)
    manifest["files"].push_back({{"path", rel}, {"sha256", sha256_hex_file((root / rel).string())}});
  write_file((root / "manifest.json").string(), manifest.dump(2) + "\n");
  return manifest;
}

// ---- detection records ----

/// JSON-lines detections: {"image_id": ..., "class_id": n,
/// "bbox": [xmin,ymin,xmax,ymax], "score": s}. image_id may be a string or a
/// number; numbers are normalized to their decimal rendering.
inline std::vector<eval::DetectionRecord> read_detections_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<eval::DetectionRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    eval::DetectionRecord d;
    const auto& id = j.at("image_id");
    d.image_id = id.is_string() ? id.get<std::string>() : std::to_string(id.get<long long>());
    d.class_id = j.at("class_id").get<int>();
    const auto& bb = j.at("bbox");
    if (!bb.is_array() || bb.size() != 4)
      throw ParseError(path + ":" + std::to_string(line_no) + ": bbox must be [xmin,ymin,xmax,ymax]");
    d.bbox = BBox{bb[0].get<double>(), bb[1].get<double>(), bb[2].get<double>(), bb[3].get<double>()};
    d.score = j.at("score").get<double>();
    if (!(d.score >= 0.0 && d.score <= 1.0))
      throw ParseError(path + ":" + std::to_string(line_no) + ": score outside [0,1]");
    out.push_back(std::move(d));
  }
  return out;
}

inline void write_detections_jsonl(const std::string& path,
                                   const std::vector<eval::DetectionRecord>& dets) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  for (const auto& d : dets) {
    json j = {{"image_id", d.image_id},
              {"class_id", d.class_id},
              {"bbox", {d.bbox.xmin, d.bbox.ymin, d.bbox.xmax, d.bbox.ymax}},
              {"score", d.score}};
    out << j.dump() << "\n";
  }
}

/// Read a file holding either a JSON array or JSON lines; returns the items.
inline std::vector<json> read_json_or_jsonl(const std::string& path) {
  const std::string text = read_file(path);
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  if (text[first] == '[') {
    const json doc = json::parse(text);
    return std::vector<json>(doc.begin(), doc.end());
  }
  std::vector<json> out;
  std::istringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    out.push_back(json::parse(line));
  }
  return out;
}

}  // namespace detkit::io
