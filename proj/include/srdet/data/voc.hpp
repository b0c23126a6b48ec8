#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "srdet/data/sample.hpp"
#include "srdet/image/png_io.hpp"

namespace srdet {

/// Load diagnostics: skipped samples and dropped boxes are counted, not
/// silently ignored.
struct VocLoadReport {
    int missing_annotations = 0;
    int clipped_boxes = 0;
    int dropped_boxes = 0;
    std::vector<std::string> skipped_ids;
};

namespace detail {

/// Minimal tag scanner for the VOC annotation subset written by this
/// project: <object><name>..</name><bndbox><xmin>..</xmin>...</bndbox>.
inline std::string tag_content(const std::string& text, const std::string& tag, std::size_t from,
                               std::size_t* end_out = nullptr) {
    const std::string open = "<" + tag + ">", close = "</" + tag + ">";
    const auto a = text.find(open, from);
    if (a == std::string::npos) return {};
    const auto b = text.find(close, a);
    if (b == std::string::npos) return {};
    if (end_out) *end_out = b + close.size();
    return text.substr(a + open.size(), b - a - open.size());
}

inline std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        default: out += c;
        }
    }
    return out;
}

} // namespace detail

/// Writes a raw dataset in the VOC-style layout:
///   root/images/<id>.png, root/annotations/<id>.xml, root/splits/<split>.txt
inline void write_voc_dataset(const RawDataset& ds, const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    fs::create_directories(root / "images");
    fs::create_directories(root / "annotations");
    fs::create_directories(root / "splits");

    std::ofstream split_file(root / "splits" / (ds.split + ".txt"));
    if (!split_file) throw IoError("cannot write split file under " + root.string());
    for (const RawSample& s : ds.samples) {
        write_png(root / "images" / (s.id + ".png"), s.image);
        std::ofstream xml(root / "annotations" / (s.id + ".xml"));
        if (!xml) throw IoError("cannot write annotation for " + s.id);
        xml << "<annotation>\n";
        xml << "  <filename>" << detail::xml_escape(s.id) << ".png</filename>\n";
        xml << "  <size><width>" << s.image.width() << "</width><height>" << s.image.height()
            << "</height><depth>3</depth></size>\n";
        for (std::size_t i = 0; i < s.boxes.size(); ++i) {
            const Box& b = s.boxes[i];
            xml << "  <object>\n";
            xml << "    <name>" << detail::xml_escape(ds.class_names.at(s.class_ids[i]))
                << "</name>\n";
            xml << "    <bndbox><xmin>" << static_cast<long>(b.xmin) << "</xmin><ymin>"
                << static_cast<long>(b.ymin) << "</ymin><xmax>" << static_cast<long>(b.xmax)
                << "</xmax><ymax>" << static_cast<long>(b.ymax) << "</ymax></bndbox>\n";
            xml << "  </object>\n";
        }
        xml << "</annotation>\n";
        split_file << s.id << "\n";
    }
}

/// Loads the raw dataset for one split. Boxes are clipped to image bounds;
/// boxes with no remaining area are dropped. Samples with a missing
/// annotation file are skipped and reported; an unreadable image is an
/// error naming the path.
inline RawDataset load_voc_raw(const std::filesystem::path& root, const std::string& split,
                               const std::vector<std::string>& class_names,
                               VocLoadReport* report = nullptr) {
    namespace fs = std::filesystem;
    VocLoadReport local;
    VocLoadReport& rep = report ? *report : local;

    const fs::path split_path = root / "splits" / (split + ".txt");
    std::ifstream split_file(split_path);
    if (!split_file) throw IoError("missing split file: " + split_path.string());

    std::map<std::string, int> class_index;
    for (std::size_t i = 0; i < class_names.size(); ++i)
        class_index[class_names[i]] = static_cast<int>(i);

    RawDataset ds;
    ds.class_names = class_names;
    ds.split = split;

    std::string id;
    while (std::getline(split_file, id)) {
        while (!id.empty() && (id.back() == '\r' || id.back() == ' ')) id.pop_back();
        if (id.empty()) continue;

        const fs::path xml_path = root / "annotations" / (id + ".xml");
        if (!fs::exists(xml_path)) {
            ++rep.missing_annotations;
            rep.skipped_ids.push_back(id);
            continue;
        }
        fs::path img_path = root / "images" / (id + ".png");
        if (!fs::exists(img_path)) img_path = root / "images" / (id + ".jpg");
        if (!fs::exists(img_path)) img_path = root / "images" / (id + ".jpeg");
        if (!fs::exists(img_path))
            throw IoError("image not found for id '" + id + "' under " +
                          (root / "images").string());

        RawSample sample;
        sample.id = id;
        sample.image = read_image(img_path);

        std::ifstream xml_file(xml_path);
        std::stringstream buf;
        buf << xml_file.rdbuf();
        const std::string xml = buf.str();

        std::size_t pos = 0;
        while (true) {
            std::size_t obj_end = 0;
            const std::string obj = detail::tag_content(xml, "object", pos, &obj_end);
            if (obj.empty() && obj_end == 0) break;
            pos = obj_end;
            const std::string name = detail::tag_content(obj, "name", 0);
            const auto cls = class_index.find(name);
            if (cls == class_index.end())
                throw ValidationError("unknown class '" + name + "' in " + xml_path.string());
            Box b;
            try {
                b.xmin = std::stod(detail::tag_content(obj, "xmin", 0));
                b.ymin = std::stod(detail::tag_content(obj, "ymin", 0));
                b.xmax = std::stod(detail::tag_content(obj, "xmax", 0));
                b.ymax = std::stod(detail::tag_content(obj, "ymax", 0));
            } catch (const std::exception&) {
                throw ValidationError("malformed bndbox in " + xml_path.string());
            }
            const Box clipped = b.clipped(sample.image.width(), sample.image.height());
            if (clipped.xmin != b.xmin || clipped.ymin != b.ymin || clipped.xmax != b.xmax ||
                clipped.ymax != b.ymax)
                ++rep.clipped_boxes;
            if (!clipped.valid()) {
                ++rep.dropped_boxes;
                continue;
            }
            sample.boxes.push_back(clipped);
            sample.class_ids.push_back(cls->second);
        }
        ds.samples.push_back(std::move(sample));
    }

    for (std::size_t i = 0; i < ds.samples.size(); ++i)
        for (std::size_t j = i + 1; j < ds.samples.size(); ++j)
            if (ds.samples[i].id == ds.samples[j].id)
                throw ValidationError("duplicate image id: " + ds.samples[i].id);
    return ds;
}

} // namespace srdet
