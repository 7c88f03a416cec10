#pragma once

#include <map>

#include "model.hpp"

namespace greenleaf {

struct ProfileRow {
    std::string model;
    std::int64_t parameters = 0;
    std::int64_t flops = 0;  // 0 for reference rows taken from the literature
    double relative_energy = 0;
};

// Parameter count relative to the largest entry, rounded half-up to two
// decimals; the largest row is exactly 1.00.
std::map<std::string, double> relative_energy(const std::map<std::string, std::int64_t>& counts);

// Published parameter counts used for comparison rows.
const std::vector<ProfileRow>& reference_rows();

struct ProfileTable {
    std::vector<ProfileRow> rows;  // sorted by descending parameter count
};

ProfileTable profile_report(std::vector<ProfileRow> rows, bool include_reference_rows);

std::string profile_to_csv(const ProfileTable& table);
ProfileTable profile_from_csv(const std::string& csv);
std::string profile_to_text(const ProfileTable& table);

ProfileRow profile_model(ModelGraph& model);

} // namespace greenleaf
