#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>

#include "core/dataset.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace greenleaf;
using gltest::max_abs_diff;
using gltest::random_tensor;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void write_solid_png(const fs::path& p, int w, int h, std::uint8_t r, std::uint8_t g,
                     std::uint8_t b) {
    ImageU8 img;
    img.width = w;
    img.height = h;
    img.rgb.resize(static_cast<std::size_t>(w) * h * 3);
    for (std::size_t i = 0; i < static_cast<std::size_t>(w) * h; ++i) {
        img.rgb[i * 3] = r;
        img.rgb[i * 3 + 1] = g;
        img.rgb[i * 3 + 2] = b;
    }
    encode_png(p.string(), img);
}

DatasetIndex fake_index(const std::vector<int>& counts) {
    DatasetIndex index;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        index.class_names.push_back(concat("class", c));
        for (int i = 0; i < counts[c]; ++i)
            index.records.push_back({concat("fake/", c, "/", i, ".jpg"), static_cast<int>(c)});
    }
    return index;
}

std::multiset<std::string> path_multiset(const DatasetIndex& index) {
    std::multiset<std::string> out;
    for (const auto& r : index.records) out.insert(r.path);
    return out;
}

} // namespace

TEST_CASE("scan_dataset finds sorted classes and filters non-images") {
    TempDir dir("greenleaf_scan_test");
    for (const char* cls : {"Hispa", "BrownSpot", "LeafBlast", "Healthy"})
        fs::create_directories(dir.path / cls);
    write_solid_png(dir.path / "BrownSpot" / "a.png", 4, 4, 10, 20, 30);
    write_solid_png(dir.path / "BrownSpot" / "b.jpg", 4, 4, 10, 20, 30);
    std::ofstream(dir.path / "BrownSpot" / "notes.txt") << "not an image";
    write_solid_png(dir.path / "Healthy" / "a.JPG", 4, 4, 1, 2, 3);
    write_solid_png(dir.path / "Hispa" / "a.jpeg", 4, 4, 1, 2, 3);
    write_solid_png(dir.path / "LeafBlast" / "a.png", 4, 4, 1, 2, 3);

    DatasetIndex index = scan_dataset(dir.path.string());
    REQUIRE(index.class_names.size() == 4);
    CHECK(index.class_names[0] == "BrownSpot");
    CHECK(index.class_names[1] == "Healthy");
    CHECK(index.class_names[2] == "Hispa");
    CHECK(index.class_names[3] == "LeafBlast");
    CHECK(index.records.size() == 5);
    CHECK(index.per_class_counts() == std::vector<int>{2, 1, 1, 1});
    CHECK(index.skipped_files == 1);
}

TEST_CASE("scan_dataset error paths") {
    TempDir dir("greenleaf_scan_empty");
    CHECK_THROWS_AS(scan_dataset(dir.path.string()), Error);  // no class subdirectories
    CHECK_THROWS_AS(scan_dataset((dir.path / "missing").string()), Error);
    try {
        scan_dataset((dir.path / "missing").string());
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::io);
    }
}

TEST_CASE("balance_downsample reaches equal counts") {
    DatasetIndex index = fake_index({523, 1000, 900, 932});
    REQUIRE(index.records.size() == 3355);
    DatasetIndex balanced = balance_downsample(index, 42);
    CHECK(balanced.records.size() == 2092);
    CHECK(balanced.per_class_counts() == std::vector<int>{523, 523, 523, 523});

    // retained paths are a subset of the originals
    const auto original = path_multiset(index);
    for (const auto& r : balanced.records) CHECK(original.count(r.path) == 1);
}

TEST_CASE("balance_downsample keeps balanced input unchanged and is idempotent") {
    DatasetIndex index = fake_index({7, 7, 7});
    DatasetIndex balanced = balance_downsample(index, 5);
    CHECK(path_multiset(balanced) == path_multiset(index));

    DatasetIndex uneven = fake_index({10, 4, 7});
    DatasetIndex once = balance_downsample(uneven, 9);
    CHECK(once.per_class_counts() == std::vector<int>{4, 4, 4});
    DatasetIndex twice = balance_downsample(once, 9);
    REQUIRE(once.records.size() == twice.records.size());
    for (std::size_t i = 0; i < once.records.size(); ++i)
        CHECK(once.records[i].path == twice.records[i].path);

    // deterministic per seed, and seeds select different subsets
    DatasetIndex again = balance_downsample(uneven, 9);
    CHECK(path_multiset(once) == path_multiset(again));
    bool any_differs = false;
    for (std::uint64_t seed = 0; seed < 8 && !any_differs; ++seed)
        any_differs = path_multiset(balance_downsample(uneven, seed)) != path_multiset(once);
    CHECK(any_differs);
}

TEST_CASE("balance_downsample names the offending empty class") {
    DatasetIndex index = fake_index({3, 0, 5});
    CHECK_THROWS_WITH_AS(balance_downsample(index, 1), doctest::Contains("class1"), Error);
}

TEST_CASE("stratified_split proportions and determinism") {
    DatasetIndex index = fake_index({523, 523, 523, 523});
    auto [train, val] = stratified_split(index, 0.2, 3);
    CHECK(val.per_class_counts() == std::vector<int>{105, 105, 105, 105});
    CHECK(train.per_class_counts() == std::vector<int>{418, 418, 418, 418});

    // disjoint and exhaustive
    auto all = path_multiset(train);
    for (const auto& p : path_multiset(val)) all.insert(p);
    CHECK(all == path_multiset(index));

    auto [train2, val2] = stratified_split(index, 0.2, 3);
    REQUIRE(val.records.size() == val2.records.size());
    for (std::size_t i = 0; i < val.records.size(); ++i)
        CHECK(val.records[i].path == val2.records[i].path);

    DatasetIndex ten = fake_index({10});
    auto [t5, v5] = stratified_split(ten, 0.5, 1);
    CHECK(t5.records.size() == 5);
    CHECK(v5.records.size() == 5);

    DatasetIndex tiny = fake_index({1, 10});
    CHECK_THROWS_AS(stratified_split(tiny, 0.5, 1), Error);
    CHECK_THROWS_AS(stratified_split(ten, 0.0, 1), Error);
    CHECK_THROWS_AS(stratified_split(ten, 1.0, 1), Error);
}

TEST_CASE("index json round trip and validation") {
    TempDir dir("greenleaf_index_json");
    DatasetIndex index = fake_index({3, 2});
    index.provenance = "unit test";
    const std::string path = (dir.path / "index.json").string();
    save_index_json(index, path);
    DatasetIndex loaded = load_index_json(path);
    CHECK(loaded.class_names == index.class_names);
    CHECK(loaded.provenance == "unit test");
    REQUIRE(loaded.records.size() == index.records.size());
    for (std::size_t i = 0; i < index.records.size(); ++i) {
        CHECK(loaded.records[i].path == index.records[i].path);
        CHECK(loaded.records[i].class_id == index.records[i].class_id);
    }

    std::ofstream(path) << "{\"class_names\": [\"a\"], \"records\": [{\"path\": \"x\", "
                           "\"class_id\": 7}]}";
    CHECK_THROWS_AS(load_index_json(path), Error);
    std::ofstream(path) << "not json";
    CHECK_THROWS_AS(load_index_json(path), Error);
}

TEST_CASE("load_and_resize and bilinear semantics") {
    TempDir dir("greenleaf_img");
    write_solid_png(dir.path / "red.png", 10, 10, 255, 0, 0);
    Tensor red = load_and_resize((dir.path / "red.png").string(), 224);
    CHECK(red.shape() == Shape{1, 3, 224, 224});
    for (int y = 0; y < 224; ++y)
        for (int x = 0; x < 224; ++x) {
            CHECK(red.at(0, 0, y, x) == 1.0);
            CHECK(red.at(0, 1, y, x) == 0.0);
            CHECK(red.at(0, 2, y, x) == 0.0);
        }

    CHECK_THROWS_AS(load_and_resize((dir.path / "missing.png").string(), 32), Error);
    std::ofstream(dir.path / "broken.png") << "junk";
    CHECK_THROWS_AS(load_and_resize((dir.path / "broken.png").string(), 32), Error);

    // 2x2 checkerboard upscaled to 4x4, against the half-pixel formula by hand
    Tensor board(Shape{1, 1, 2, 2});
    board.at(0, 0, 0, 0) = 1.0;
    board.at(0, 0, 1, 1) = 1.0;
    Tensor up = bilinear_resize(board, 4, 4);
    auto expected_at = [&](int oy, int ox) {
        const double fy = std::clamp((oy + 0.5) * 0.5 - 0.5, 0.0, 1.0);
        const double fx = std::clamp((ox + 0.5) * 0.5 - 0.5, 0.0, 1.0);
        const int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
        const int y1 = std::min(y0 + 1, 1), x1 = std::min(x0 + 1, 1);
        const double wy = fy - y0, wx = fx - x0;
        return (1 - wy) * ((1 - wx) * board.at(0, 0, y0, x0) + wx * board.at(0, 0, y0, x1)) +
               wy * ((1 - wx) * board.at(0, 0, y1, x0) + wx * board.at(0, 0, y1, x1));
    };
    for (int oy = 0; oy < 4; ++oy)
        for (int ox = 0; ox < 4; ++ox)
            CHECK(up.at(0, 0, oy, ox) == doctest::Approx(expected_at(oy, ox)).epsilon(1e-6));
    // the two interior samples actually blend
    CHECK(up.at(0, 0, 1, 1) == doctest::Approx(0.625).epsilon(1e-12));
    CHECK(up.at(0, 0, 1, 2) == doctest::Approx(0.375).epsilon(1e-12));
}

TEST_CASE("augment: identity config is bit-identical, flip reverses columns") {
    Rng rng(1);
    Tensor img = random_tensor(Shape{1, 3, 9, 9}, rng, 0.0, 1.0);
    AugmentationConfig zero;
    zero.rotation_deg = zero.zoom = zero.width_shift = zero.height_shift = zero.shear = 0.0;
    zero.horizontal_flip = false;
    AugmentParams sampled;
    Tensor out = augment(img, zero, Rng(7), &sampled);
    CHECK(max_abs_diff(out, img) == 0.0);
    CHECK(sampled.rotation_deg == 0.0);
    CHECK(sampled.zoom == 1.0);
    CHECK_FALSE(sampled.flipped);

    AugmentParams flip;
    flip.flipped = true;
    Tensor pattern(Shape{1, 1, 3, 3});
    for (int i = 0; i < 9; ++i) pattern.data()[i] = (i + 1) / 10.0;
    Tensor flipped = apply_affine(pattern, flip);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 3; ++x)
            CHECK(flipped.at(0, 0, y, x) == pattern.at(0, 0, y, 2 - x));
}

TEST_CASE("augment sampling respects configured bounds") {
    AugmentationConfig cfg;  // defaults: 30 deg, 0.15 zoom, 0.2 shifts, 0.15 shear, flip on
    Rng master(99);
    int flips = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        const AugmentParams p = sample_augment_params(cfg, master.derive(i));
        CHECK(p.rotation_deg >= -30.0);
        CHECK(p.rotation_deg <= 30.0);
        CHECK(p.zoom >= 0.85);
        CHECK(p.zoom <= 1.15);
        CHECK(p.shift_x >= -0.2);
        CHECK(p.shift_x <= 0.2);
        CHECK(p.shift_y >= -0.2);
        CHECK(p.shift_y <= 0.2);
        CHECK(p.shear >= -0.15);
        CHECK(p.shear <= 0.15);
        flips += p.flipped ? 1 : 0;
    }
    const double flip_rate = static_cast<double>(flips) / n;
    CHECK(flip_rate > 0.47);
    CHECK(flip_rate < 0.53);
}

TEST_CASE("augment sub-streams are independent across config changes") {
    AugmentationConfig cfg;
    const Rng rng(1234);
    const AugmentParams base = sample_augment_params(cfg, rng);
    AugmentationConfig wider = cfg;
    wider.rotation_deg = 5.0;  // only the rotation distribution may change
    const AugmentParams changed = sample_augment_params(wider, rng);
    CHECK(changed.zoom == base.zoom);
    CHECK(changed.shift_x == base.shift_x);
    CHECK(changed.shift_y == base.shift_y);
    CHECK(changed.shear == base.shear);
    CHECK(changed.flipped == base.flipped);
    CHECK(changed.rotation_deg != base.rotation_deg);
}

TEST_CASE("augment preserves shape and clamps to [0,1]") {
    Rng rng(2);
    Tensor img = random_tensor(Shape{1, 3, 17, 13}, rng, 0.0, 1.0);
    AugmentationConfig cfg;
    for (int i = 0; i < 20; ++i) {
        Tensor out = augment(img, cfg, rng.derive(i));
        CHECK(out.shape() == img.shape());
        for (const double v : out.values()) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
    AugmentationConfig bad;
    bad.zoom = 1.0;
    CHECK_THROWS_AS(sample_augment_params(bad, rng), Error);
}

TEST_CASE("epoch batches: partial tail, full multiset, reshuffled epochs") {
    DatasetIndex index = fake_index({60, 40});
    auto batches = epoch_batches(index, 32, 5, 0);
    REQUIRE(batches.size() == 4);
    CHECK(batches[0].size() == 32);
    CHECK(batches[1].size() == 32);
    CHECK(batches[2].size() == 32);
    CHECK(batches[3].size() == 4);

    std::vector<std::size_t> all;
    for (const auto& b : batches) all.insert(all.end(), b.begin(), b.end());
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);

    auto epoch1 = epoch_batches(index, 32, 5, 1);
    CHECK(epoch1[0] != batches[0]);  // different epoch, different order
    auto replay = epoch_batches(index, 32, 5, 0);
    CHECK(replay == batches);

    CHECK_THROWS_AS(epoch_batches(index, 0, 5, 0), Error);
}

TEST_CASE("synthetic fixture is scannable and batches load with augmentation") {
    TempDir dir("greenleaf_fixture");
    DatasetIndex index = make_synthetic_fixture(dir.path.string(), 3, 16, 77);
    CHECK(index.class_names.size() == 4);
    CHECK(index.records.size() == 12);
    CHECK(index.per_class_counts() == std::vector<int>{3, 3, 3, 3});

    const std::vector<std::size_t> ids = {0, 3, 6, 9, 11};
    AugmentationConfig aug;
    Batch batch = load_batch(index, ids, 16, &aug, 123, 2);
    CHECK(batch.images.shape() == Shape{5, 3, 16, 16});
    CHECK(batch.labels == std::vector<int>{0, 1, 2, 3, 3});
    CHECK(all_finite(batch.images));

    // per-record streams: the same record loads identically regardless of
    // batch position
    const std::vector<std::size_t> reordered = {11, 6, 0, 3, 9};
    Batch batch2 = load_batch(index, reordered, 16, &aug, 123, 2);
    const std::int64_t px = 3 * 16 * 16;
    for (std::int64_t i = 0; i < px; ++i)
        CHECK(batch.images.data()[i] == batch2.images.data()[2 * px + i]);

    // fixture regeneration with the same seed is bit-identical on disk
    TempDir dir2("greenleaf_fixture2");
    make_synthetic_fixture(dir2.path.string(), 3, 16, 77);
    Tensor a = load_and_resize((dir.path / "class_a" / "img_0.png").string(), 16);
    Tensor b = load_and_resize((dir2.path / "class_a" / "img_0.png").string(), 16);
    CHECK(max_abs_diff(a, b) == 0.0);
}
