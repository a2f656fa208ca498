#include "hscnn/manifest.hpp"

#include "binary_io.hpp"

#include <filesystem>
#include <sstream>

namespace hscnn {

namespace fs = std::filesystem;

namespace {

constexpr std::array<const char*, 8> kFixedColumns = {"case_id",     "nodule_id",   "reader_count",
                                                      "slice_thickness_mm", "center_x_mm", "center_y_mm",
                                                      "center_z_mm", "volume_path"};

std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ','))
        out.push_back(cell);
    if (!line.empty() && line.back() == ',')
        out.emplace_back();
    return out;
}

std::string format_double(double v)
{
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

} // namespace

std::vector<std::string> manifest_columns()
{
    std::vector<std::string> cols(kFixedColumns.begin(), kFixedColumns.end());
    for (int k = 1; k <= kMaxReaders; ++k)
        for (Task t : kManifestRatingOrder)
            cols.push_back("rating_" + std::to_string(k) + "_" + std::string(task_name(t)));
    return cols;
}

SourceVolume Manifest::load_volume(const AnnotationRecord& record) const
{
    return read_volume((fs::path(directory) / record.volume_path).string());
}

Manifest load_manifest(const std::string& dir)
{
    const fs::path path = fs::path(dir) / "manifest.csv";
    if (!fs::exists(path))
        throw DataError("manifest '" + path.string() + "' not found");
    std::istringstream in(detail::read_text_file(path.string()));

    Manifest m;
    m.directory = dir;
    std::vector<std::string> errors;
    const auto columns = manifest_columns();

    std::string line;
    int line_no = 0;
    if (!std::getline(in, line)) {
        return m;
    }
    ++line_no;
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
    if (split_csv(line) != columns)
        throw DataError(path.string() + ":1: header does not match the manifest schema");

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
        const auto cells = split_csv(line);
        if (cells.size() != columns.size()) {
            errors.push_back(where + "expected " + std::to_string(columns.size()) + " columns, found " +
                             std::to_string(cells.size()));
            continue;
        }
        const std::size_t before = errors.size();
        auto number = [&](std::size_t col) -> double {
            try {
                std::size_t used = 0;
                const double v = std::stod(cells[col], &used);
                if (used == cells[col].size())
                    return v;
            } catch (const std::logic_error&) {
            }
            errors.push_back(where + "column '" + columns[col] + "' is not a number: '" + cells[col] + "'");
            return 0.0;
        };

        AnnotationRecord r;
        r.case_id = cells[0];
        r.nodule_id = cells[1];
        if (r.case_id.empty() || r.nodule_id.empty())
            errors.push_back(where + "case_id and nodule_id must be non-empty");
        const double readers = number(2);
        r.reader_count = static_cast<int>(readers);
        if (readers != r.reader_count || r.reader_count < 1 || r.reader_count > kMaxReaders)
            errors.push_back(where + "column 'reader_count' must be an integer in 1..4");
        r.slice_thickness_mm = number(3);
        if (!(r.slice_thickness_mm > 0.0))
            errors.push_back(where + "column 'slice_thickness_mm' must be positive");
        for (std::size_t a = 0; a < 3; ++a)
            r.center_mm[a] = number(4 + a);
        r.volume_path = cells[7];
        if (r.volume_path.empty())
            errors.push_back(where + "column 'volume_path' is empty");
        else if (!fs::exists(fs::path(dir) / r.volume_path))
            errors.push_back(where + "column 'volume_path' names a missing file '" + r.volume_path + "'");

        for (int k = 0; k < kMaxReaders; ++k) {
            const std::size_t first = kFixedColumns.size() + static_cast<std::size_t>(k) * kTaskCount;
            bool any = false, all = true;
            for (std::size_t c = 0; c < kTaskCount; ++c) {
                any = any || !cells[first + c].empty();
                all = all && !cells[first + c].empty();
            }
            if (!any)
                continue;
            if (!all) {
                errors.push_back(where + "reader " + std::to_string(k + 1) + " has incomplete ratings");
                continue;
            }
            ReaderRatings rr{};
            for (std::size_t c = 0; c < kTaskCount; ++c) {
                const Task t = kManifestRatingOrder[c];
                const double v = number(first + c);
                const int max = t == Task::Calcification ? 6 : 5;
                if (v != static_cast<int>(v) || v < 1 || v > max)
                    errors.push_back(where + "column '" + columns[first + c] + "' rating " + cells[first + c] +
                                     " outside 1.." + std::to_string(max));
                rr[static_cast<std::size_t>(task_index(t))] = static_cast<int>(v);
            }
            r.readers.push_back(rr);
        }
        if (errors.size() == before && static_cast<std::size_t>(r.reader_count) != r.readers.size())
            errors.push_back(where + "reader_count " + std::to_string(r.reader_count) + " but " +
                             std::to_string(r.readers.size()) + " rating sets");
        if (errors.size() == before)
            m.records.push_back(std::move(r));
    }

    if (!errors.empty()) {
        std::string msg = "manifest has " + std::to_string(errors.size()) + " error(s):";
        for (const auto& e : errors)
            msg += "\n  " + e;
        throw DataError(msg);
    }
    return m;
}

void write_manifest(const std::string& dir, const std::vector<AnnotationRecord>& records)
{
    std::ostringstream os;
    const auto columns = manifest_columns();
    for (std::size_t i = 0; i < columns.size(); ++i)
        os << (i ? "," : "") << columns[i];
    os << '\n';
    for (const auto& r : records) {
        r.validate();
        if (r.readers.size() > static_cast<std::size_t>(kMaxReaders))
            throw DataError("at most four readers per nodule");
        os << r.case_id << ',' << r.nodule_id << ',' << r.reader_count << ',' << format_double(r.slice_thickness_mm)
           << ',' << format_double(r.center_mm[0]) << ',' << format_double(r.center_mm[1]) << ','
           << format_double(r.center_mm[2]) << ',' << r.volume_path;
        for (int k = 0; k < kMaxReaders; ++k)
            for (Task t : kManifestRatingOrder) {
                os << ',';
                if (static_cast<std::size_t>(k) < r.readers.size())
                    os << r.readers[static_cast<std::size_t>(k)][static_cast<std::size_t>(task_index(t))];
            }
        os << '\n';
    }
    fs::create_directories(dir);
    detail::write_text_file((fs::path(dir) / "manifest.csv").string(), os.str());
}

std::vector<NoduleSample> build_samples(const Manifest& manifest, const PreprocessOptions& options)
{
    const auto kept = filter_annotations(manifest.records);
    std::vector<NoduleSample> out;
    std::size_t cached_record = kept.size();
    Tensor<float> cube;
    for (const auto& a : expand_annotations(kept)) {
        const auto& rec = kept[a.record];
        if (a.record != cached_record) {
            SourceVolume volume;
            try {
                volume = normalize_hu(manifest.load_volume(rec));
            } catch (const DataError& e) {
                throw DataError("nodule " + rec.case_id + "/" + rec.nodule_id + ": " + e.what());
            }
            cube = extract_cube(volume, rec.center_mm, options.cube_voxels, options.cube_mm);
            cached_record = a.record;
        }
        out.push_back({cube, a.labels, {rec.case_id, rec.nodule_id, a.annotation}});
    }
    return out;
}

} // namespace hscnn
