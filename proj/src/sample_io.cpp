#include "hscnn/sample.hpp"

#include "binary_io.hpp"

#include <algorithm>
#include <filesystem>
#include <sstream>

namespace hscnn {

namespace fs = std::filesystem;

void NoduleSample::validate(Index expected_extent) const
{
    const Index S = expected_extent;
    if (cube.shape() != Shape{1, S, S, S})
        throw DataError("sample " + provenance.case_id + "/" + provenance.nodule_id + " has cube shape " +
                        shape_string(cube.shape()) + ", expected (1," + std::to_string(S) + "," + std::to_string(S) +
                        "," + std::to_string(S) + ")");
    for (int l : labels)
        if (l != 0 && l != 1)
            throw DataError("sample " + provenance.case_id + "/" + provenance.nodule_id + " lacks a binary label");
}

std::vector<LabelSet> labels_of(const std::vector<NoduleSample>& samples)
{
    std::vector<LabelSet> out;
    out.reserve(samples.size());
    for (const auto& s : samples)
        out.push_back(s.labels);
    return out;
}

std::string sample_file_name(const Provenance& p)
{
    return p.case_id + "_" + p.nodule_id + "_" + std::to_string(p.annotation) + ".smp";
}

void write_sample(const NoduleSample& sample, const std::string& path)
{
    const Index S = sample.extent();
    sample.validate(S);
    std::ostringstream h;
    h << "HSCNN-SAMPLE 1\n"
      << "case_id " << sample.provenance.case_id << '\n'
      << "nodule_id " << sample.provenance.nodule_id << '\n'
      << "annotation " << sample.provenance.annotation << '\n'
      << "size " << S << '\n'
      << "labels";
    for (Task t : kAllTasks)
        h << ' ' << task_name(t) << '=' << sample.label(t);
    h << '\n' << "data float32le " << S * S * S << '\n';
    detail::ByteWriter w;
    w.put_raw(h.str());
    for (Index i = 0; i < sample.cube.size(); ++i)
        w.put_f32(sample.cube[i]);
    detail::write_file(path, w.bytes());
}

NoduleSample read_sample(const std::string& path)
{
    const auto bytes = detail::read_file(path);
    const std::string what = "sample file '" + path + "'";
    std::size_t pos = 0;
    auto next_line = [&]() {
        const auto* begin = bytes.data() + pos;
        const auto* end = static_cast<const char*>(std::memchr(begin, '\n', bytes.size() - pos));
        if (!end)
            throw DataError(what + ": malformed header");
        std::string line(begin, end);
        pos += line.size() + 1;
        return line;
    };
    auto field = [&](const std::string& key) {
        const std::string line = next_line();
        if (line.rfind(key + " ", 0) != 0)
            throw DataError(what + ": expected '" + key + "'");
        return line.substr(key.size() + 1);
    };

    if (next_line() != "HSCNN-SAMPLE 1")
        throw DataError(what + ": not a version-1 sample file");
    NoduleSample s;
    s.provenance.case_id = field("case_id");
    s.provenance.nodule_id = field("nodule_id");
    Index S = 0;
    try {
        s.provenance.annotation = std::stoi(field("annotation"));
        S = std::stol(field("size"));
    } catch (const std::logic_error&) {
        throw DataError(what + ": malformed numeric header field");
    }
    if (S <= 0)
        throw DataError(what + ": cube size must be positive");
    s.labels.fill(kMissingLabel);
    std::istringstream labels(field("labels"));
    std::string item;
    while (labels >> item) {
        const auto eq = item.find('=');
        if (eq == std::string::npos)
            throw DataError(what + ": malformed label '" + item + "'");
        Task t;
        try {
            t = task_from_name(item.substr(0, eq));
        } catch (const ConfigError& e) {
            throw DataError(what + ": " + e.what());
        }
        const std::string v = item.substr(eq + 1);
        if (v != "0" && v != "1")
            throw DataError(what + ": label values must be 0 or 1");
        s.labels[static_cast<std::size_t>(task_index(t))] = v == "1";
    }
    if (field("data") != "float32le " + std::to_string(S * S * S))
        throw DataError(what + ": unexpected data descriptor");
    detail::ByteReader r(bytes.data() + pos, bytes.size() - pos, what);
    if (r.remaining() != static_cast<std::size_t>(S * S * S) * 4)
        throw DataError(what + ": payload size does not match the cube size");
    s.cube = Tensor<float>({1, S, S, S});
    for (Index i = 0; i < s.cube.size(); ++i)
        s.cube[i] = r.get_f32();
    try {
        s.validate(S);
    } catch (const DataError& e) {
        throw DataError(what + ": " + e.what());
    }
    return s;
}

void write_sample_dir(const std::vector<NoduleSample>& samples, const std::string& dir)
{
    fs::create_directories(dir);
    std::string index;
    for (const auto& s : samples) {
        const std::string name = sample_file_name(s.provenance);
        write_sample(s, (fs::path(dir) / name).string());
        index += name + "\n";
    }
    detail::write_text_file((fs::path(dir) / "index.txt").string(), index);
}

std::vector<NoduleSample> read_sample_dir(const std::string& dir)
{
    if (!fs::is_directory(dir))
        throw DataError("sample directory '" + dir + "' does not exist");
    std::vector<std::string> names;
    const fs::path index = fs::path(dir) / "index.txt";
    if (fs::exists(index)) {
        std::istringstream is(detail::read_text_file(index.string()));
        std::string line;
        while (std::getline(is, line))
            if (!line.empty())
                names.push_back(line);
    } else {
        for (const auto& e : fs::directory_iterator(dir))
            if (e.path().extension() == ".smp")
                names.push_back(e.path().filename().string());
        std::sort(names.begin(), names.end());
    }
    std::vector<NoduleSample> out;
    for (const auto& n : names)
        out.push_back(read_sample((fs::path(dir) / n).string()));
    return out;
}

} // namespace hscnn
