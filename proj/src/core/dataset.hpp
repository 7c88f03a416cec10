#pragma once

#include <span>
#include <string>
#include <utility>

#include "augment.hpp"

namespace greenleaf {

struct DatasetRecord {
    std::string path;
    int class_id = 0;
};

struct DatasetIndex {
    std::vector<std::string> class_names;
    std::vector<DatasetRecord> records;
    std::string provenance;  // how this index was derived (seeds, filters)
    int skipped_files = 0;   // non-image files ignored while scanning

    std::vector<int> per_class_counts() const {
        std::vector<int> counts(class_names.size(), 0);
        for (const auto& r : records) counts[static_cast<std::size_t>(r.class_id)]++;
        return counts;
    }
    std::size_t size() const { return records.size(); }
};

// One class per immediate subdirectory of root, in lexicographic order.
// Indexes .jpg/.jpeg/.png files (case-insensitive); other files are counted
// as skipped.
DatasetIndex scan_dataset(const std::string& root);

// Seeded downsampling without replacement to the minimum class count.
// Output records are sorted (class, path), which makes the operation
// idempotent.
DatasetIndex balance_downsample(const DatasetIndex& index, std::uint64_t seed);

// Per-class split with round(count * val_fraction) validation records.
std::pair<DatasetIndex, DatasetIndex> stratified_split(const DatasetIndex& index,
                                                       double val_fraction, std::uint64_t seed);

void save_index_json(const DatasetIndex& index, const std::string& path);
DatasetIndex load_index_json(const std::string& path);

// Record order for one epoch: a seeded shuffle chunked into batches, the last
// possibly partial. The shuffle depends on (seed, epoch) only.
std::vector<std::vector<std::size_t>> epoch_batches(const DatasetIndex& index, int batch_size,
                                                    std::uint64_t shuffle_seed, int epoch);

struct Batch {
    Tensor images;
    std::vector<int> labels;
};

// Loads and resizes the given records; when `aug` is set every record is
// augmented with an RNG stream derived from (aug_seed, epoch, record index),
// so the result does not depend on loading order.
Batch load_batch(const DatasetIndex& index, std::span<const std::size_t> record_ids, int resolution,
                 const AugmentationConfig* aug, std::uint64_t aug_seed, int epoch);

// Writes a deterministic 4-class PNG fixture (colored noise textures, one
// directory per class) and returns its index.
DatasetIndex make_synthetic_fixture(const std::string& dir, int per_class, int size,
                                    std::uint64_t seed);

} // namespace greenleaf
