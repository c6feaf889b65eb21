#include <fstream>
#include <sstream>

#include <json.hpp>

#include "vltaboo/dataset.hpp"
#include "vltaboo/error.hpp"
#include "vltaboo/rng.hpp"

namespace vltaboo {

using nlohmann::json;

void write_ndjson(const AttributeDataset& ds, std::ostream& out) {
  out << json{{"record", "dataset"},
              {"name", ds.name},
              {"flavor", to_string(ds.flavor)},
              {"images_detected", ds.images_detected}}
             .dump()
      << '\n';
  for (const auto& c : ds.classes) {
    out << json{{"record", "class"}, {"id", c.id}, {"label", c.label}}.dump() << '\n';
  }
  for (const auto& a : ds.attributes) {
    out << json{{"record", "attribute"},
                {"id", a.id},
                {"description", a.description},
                {"expression", a.expression},
                {"raw_name", a.raw_name}}
               .dump()
        << '\n';
  }
  for (const auto& p : ds.class_profiles) {
    out << json{{"record", "profile"},
                {"class", p.class_id},
                {"attributes", p.attributes},
                {"source_scores", p.source_scores}}
               .dump()
        << '\n';
  }
  for (const auto& img : ds.images) {
    out << json{{"record", "image"},
                {"id", img.id},
                {"key", img.key},
                {"class", img.class_id},
                {"attributes", img.attributes}}
               .dump()
        << '\n';
  }
}

void save_ndjson(const AttributeDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IngestError("cannot write " + path.string());
  write_ndjson(ds, out);
}

AttributeDataset read_ndjson(std::istream& in) {
  AttributeDataset ds;
  bool header = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      const std::string kind = j.at("record").get<std::string>();
      if (kind == "dataset") {
        ds.name = j.at("name").get<std::string>();
        ds.flavor = flavor_from_string(j.at("flavor").get<std::string>());
        ds.images_detected = j.value("images_detected", false);
        header = true;
      } else if (kind == "class") {
        ds.classes.push_back({j.at("id").get<ClassId>(), j.at("label").get<std::string>()});
      } else if (kind == "attribute") {
        Attribute a;
        a.id = j.at("id").get<AttributeId>();
        a.description = j.at("description").get<std::string>();
        a.expression = j.value("expression", std::string{});
        a.raw_name = j.value("raw_name", std::string{});
        ds.attributes.push_back(std::move(a));
      } else if (kind == "profile") {
        ClassAttributeProfile p;
        p.class_id = j.at("class").get<ClassId>();
        p.attributes = j.at("attributes").get<std::vector<AttributeId>>();
        p.source_scores = j.value("source_scores", std::vector<double>{});
        ds.class_profiles.push_back(std::move(p));
      } else if (kind == "image") {
        ImageAnnotation img;
        img.id = j.at("id").get<ImageId>();
        img.key = j.value("key", std::to_string(img.id));
        img.class_id = j.at("class").get<ClassId>();
        img.attributes = j.value("attributes", std::vector<AttributeId>{});
        ds.images.push_back(std::move(img));
      } else {
        throw IngestError("unknown record kind '" + kind + "'");
      }
    } catch (const json::exception& e) {
      throw IngestError("dataset ndjson line " + std::to_string(line_no) + ": " + e.what());
    } catch (const IngestError& e) {
      throw IngestError("dataset ndjson line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!header) throw IngestError("dataset ndjson has no header record");
  return ds;
}

AttributeDataset load_ndjson(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open " + path.string());
  return read_ndjson(in);
}

std::uint64_t content_hash(const AttributeDataset& ds) {
  std::ostringstream ss;
  write_ndjson(ds, ss);
  return fnv1a64(ss.str());
}

}  // namespace vltaboo
