#include "dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

namespace fs = std::filesystem;

namespace greenleaf {

namespace {

bool has_image_extension(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == ".jpg" || ext == ".jpeg" || ext == ".png";
}

void sort_canonical(std::vector<DatasetRecord>& records) {
    std::sort(records.begin(), records.end(), [](const DatasetRecord& a, const DatasetRecord& b) {
        return a.class_id != b.class_id ? a.class_id < b.class_id : a.path < b.path;
    });
}

void check_unique_paths(const DatasetIndex& index, const std::string& origin) {
    std::set<std::string_view> seen;
    for (const auto& r : index.records)
        if (!seen.insert(r.path).second)
            fail(ErrorKind::dataset, origin, ": duplicate record path ", r.path);
}

std::vector<std::vector<std::size_t>> group_by_class(const DatasetIndex& index) {
    std::vector<std::vector<std::size_t>> groups(index.class_names.size());
    for (std::size_t i = 0; i < index.records.size(); ++i)
        groups[static_cast<std::size_t>(index.records[i].class_id)].push_back(i);
    return groups;
}

} // namespace

DatasetIndex scan_dataset(const std::string& root) {
    std::error_code ec;
    if (!fs::exists(root, ec) || ec)
        fail(ErrorKind::io, "dataset root ", root, " does not exist");
    if (!fs::is_directory(root, ec) || ec)
        fail(ErrorKind::io, "dataset root ", root, " is not a directory");

    std::vector<fs::path> class_dirs;
    try {
        for (const auto& entry : fs::directory_iterator(root))
            if (entry.is_directory()) class_dirs.push_back(entry.path());
    } catch (const fs::filesystem_error& e) {
        fail(ErrorKind::io, "cannot read dataset root ", root, ": ", e.what());
    }
    std::sort(class_dirs.begin(), class_dirs.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
    if (class_dirs.empty())
        fail(ErrorKind::dataset, "dataset root ", root, " contains no class subdirectories");

    DatasetIndex index;
    for (std::size_t cid = 0; cid < class_dirs.size(); ++cid) {
        index.class_names.push_back(class_dirs[cid].filename().string());
        std::vector<std::string> files;
        try {
            for (const auto& entry : fs::directory_iterator(class_dirs[cid])) {
                if (!entry.is_regular_file()) continue;
                if (has_image_extension(entry.path()))
                    files.push_back(entry.path().string());
                else
                    index.skipped_files++;
            }
        } catch (const fs::filesystem_error& e) {
            fail(ErrorKind::io, "cannot read class directory ", class_dirs[cid].string(), ": ",
                 e.what());
        }
        std::sort(files.begin(), files.end());
        for (auto& f : files) index.records.push_back({std::move(f), static_cast<int>(cid)});
    }
    index.provenance = concat("scanned ", root);
    check_unique_paths(index, "scan_dataset");
    return index;
}

DatasetIndex balance_downsample(const DatasetIndex& index, std::uint64_t seed) {
    const auto groups = group_by_class(index);
    std::size_t min_count = SIZE_MAX;
    for (std::size_t cid = 0; cid < groups.size(); ++cid) {
        if (groups[cid].empty())
            fail(ErrorKind::dataset, "balance_downsample: class ", index.class_names[cid],
                 " has no records");
        min_count = std::min(min_count, groups[cid].size());
    }

    DatasetIndex out;
    out.class_names = index.class_names;
    out.skipped_files = index.skipped_files;
    Rng master(seed);
    for (std::size_t cid = 0; cid < groups.size(); ++cid) {
        std::vector<std::size_t> picks = groups[cid];
        Rng rng = master.derive(cid);
        shuffle(picks, rng);
        picks.resize(min_count);
        for (const std::size_t i : picks) out.records.push_back(index.records[i]);
    }
    sort_canonical(out.records);
    out.provenance = concat(index.provenance, "; balanced to ", min_count,
                            " records/class with seed ", seed);
    return out;
}

std::pair<DatasetIndex, DatasetIndex> stratified_split(const DatasetIndex& index,
                                                       double val_fraction, std::uint64_t seed) {
    if (val_fraction <= 0.0 || val_fraction >= 1.0)
        fail(ErrorKind::parameter, "stratified_split: val_fraction must lie in (0,1), got ",
             val_fraction);
    const auto groups = group_by_class(index);

    DatasetIndex train, val;
    train.class_names = val.class_names = index.class_names;
    Rng master(seed);
    for (std::size_t cid = 0; cid < groups.size(); ++cid) {
        std::vector<std::size_t> picks = groups[cid];
        const auto n_val =
            static_cast<std::size_t>(std::lround(static_cast<double>(picks.size()) * val_fraction));
        if (picks.size() - n_val == 0)
            fail(ErrorKind::dataset, "stratified_split: class ", index.class_names[cid],
                 " would keep no training records");
        Rng rng = master.derive(cid);
        shuffle(picks, rng);
        for (std::size_t i = 0; i < picks.size(); ++i)
            (i < n_val ? val : train).records.push_back(index.records[picks[i]]);
    }
    sort_canonical(train.records);
    sort_canonical(val.records);
    train.provenance = concat(index.provenance, "; train split (", 1.0 - val_fraction, ", seed ",
                              seed, ")");
    val.provenance = concat(index.provenance, "; val split (", val_fraction, ", seed ", seed, ")");
    return {std::move(train), std::move(val)};
}

void save_index_json(const DatasetIndex& index, const std::string& path) {
    nlohmann::json j;
    j["class_names"] = index.class_names;
    j["provenance"] = index.provenance;
    j["records"] = nlohmann::json::array();
    for (const auto& r : index.records)
        j["records"].push_back({{"path", r.path}, {"class_id", r.class_id}});
    std::ofstream os(path);
    if (!os) fail(ErrorKind::io, "cannot write index ", path);
    os << j.dump(2) << "\n";
    if (!os) fail(ErrorKind::io, "failed writing index ", path);
}

DatasetIndex load_index_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) fail(ErrorKind::io, "cannot open index ", path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::decode, path, ": invalid JSON: ", e.what());
    }
    DatasetIndex index;
    try {
        index.class_names = j.at("class_names").get<std::vector<std::string>>();
        index.provenance = j.value("provenance", "");
        for (const auto& rec : j.at("records")) {
            DatasetRecord r;
            r.path = rec.at("path").get<std::string>();
            r.class_id = rec.at("class_id").get<int>();
            if (r.class_id < 0 || r.class_id >= static_cast<int>(index.class_names.size()))
                fail(ErrorKind::decode, path, ": record ", r.path, " has class_id ", r.class_id,
                     " outside [0,", index.class_names.size(), ")");
            index.records.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::decode, path, ": malformed index: ", e.what());
    }
    check_unique_paths(index, path);
    return index;
}

std::vector<std::vector<std::size_t>> epoch_batches(const DatasetIndex& index, int batch_size,
                                                    std::uint64_t shuffle_seed, int epoch) {
    if (batch_size < 1)
        fail(ErrorKind::parameter, "epoch_batches: batch size must be >= 1, got ", batch_size);
    std::vector<std::size_t> order(index.records.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng = Rng(shuffle_seed).derive(static_cast<std::uint64_t>(epoch));
    shuffle(order, rng);

    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

Batch load_batch(const DatasetIndex& index, std::span<const std::size_t> record_ids, int resolution,
                 const AugmentationConfig* aug, std::uint64_t aug_seed, int epoch) {
    Batch batch;
    batch.images = Tensor(Shape{static_cast<int>(record_ids.size()), 3, resolution, resolution});
    batch.labels.reserve(record_ids.size());
    const std::int64_t sample_size = 3LL * resolution * resolution;
    for (std::size_t bi = 0; bi < record_ids.size(); ++bi) {
        const DatasetRecord& rec = index.records[record_ids[bi]];
        Tensor img = load_and_resize(rec.path, resolution);
        if (aug) {
            const Rng stream =
                Rng(aug_seed).derive(static_cast<std::uint64_t>(epoch)).derive(record_ids[bi]);
            img = augment(img, *aug, stream);
        }
        std::copy(img.data(), img.data() + sample_size,
                  batch.images.data() + static_cast<std::int64_t>(bi) * sample_size);
        batch.labels.push_back(rec.class_id);
    }
    return batch;
}

DatasetIndex make_synthetic_fixture(const std::string& dir, int per_class, int size,
                                    std::uint64_t seed) {
    if (per_class < 1 || size < 1)
        fail(ErrorKind::parameter, "make_synthetic_fixture: per_class and size must be >= 1");
    static const char* kClassNames[4] = {"class_a", "class_b", "class_c", "class_d"};
    static const double kBase[4][3] = {
        {0.75, 0.25, 0.25}, {0.25, 0.70, 0.25}, {0.25, 0.30, 0.80}, {0.75, 0.70, 0.20}};

    Rng master(seed);
    for (int cid = 0; cid < 4; ++cid) {
        const fs::path class_dir = fs::path(dir) / kClassNames[cid];
        fs::create_directories(class_dir);
        for (int i = 0; i < per_class; ++i) {
            Rng rng = master.derive(static_cast<std::uint64_t>(cid * 100003 + i));
            ImageU8 img;
            img.height = img.width = size;
            img.rgb.resize(static_cast<std::size_t>(size) * size * 3);
            for (std::size_t px = 0; px < static_cast<std::size_t>(size) * size; ++px)
                for (int c = 0; c < 3; ++c) {
                    const double v = std::clamp(kBase[cid][c] + rng.uniform(-0.25, 0.25), 0.0, 1.0);
                    img.rgb[px * 3 + static_cast<std::size_t>(c)] =
                        static_cast<std::uint8_t>(std::lround(v * 255.0));
                }
            encode_png((class_dir / concat("img_", i, ".png")).string(), img);
        }
    }
    DatasetIndex index = scan_dataset(dir);
    index.provenance = concat("synthetic fixture (seed ", seed, ", ", per_class, "/class, ", size,
                              "px)");
    return index;
}

} // namespace greenleaf
