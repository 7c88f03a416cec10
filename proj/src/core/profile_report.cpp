#include "profile_report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace greenleaf {

std::map<std::string, double> relative_energy(const std::map<std::string, std::int64_t>& counts) {
    if (counts.empty()) fail(ErrorKind::argument, "relative_energy: no parameter counts given");
    std::int64_t max_count = 0;
    for (const auto& [name, count] : counts) {
        if (count <= 0)
            fail(ErrorKind::argument, "relative_energy: count for ", name, " must be positive");
        max_count = std::max(max_count, count);
    }
    std::map<std::string, double> out;
    for (const auto& [name, count] : counts) {
        const double ratio = static_cast<double>(count) / static_cast<double>(max_count);
        out[name] = std::floor(ratio * 100.0 + 0.5) / 100.0;  // half-up to 2 decimals
    }
    return out;
}

const std::vector<ProfileRow>& reference_rows() {
    static const std::vector<ProfileRow> rows = {
        {"VGG16", 138'000'000, 0, 0},   {"Xception", 27'300'000, 0, 0},
        {"ResNet50", 25'000'000, 0, 0}, {"GhostNet", 5'200'000, 0, 0},
        {"ModLeafNet", 1'300'000, 0, 0},
    };
    return rows;
}

ProfileTable profile_report(std::vector<ProfileRow> rows, bool include_reference_rows) {
    if (include_reference_rows)
        for (const ProfileRow& ref : reference_rows()) rows.push_back(ref);
    if (rows.empty()) fail(ErrorKind::argument, "profile_report: no rows");

    std::map<std::string, std::int64_t> counts;
    for (const ProfileRow& row : rows) {
        if (!counts.emplace(row.model, row.parameters).second)
            fail(ErrorKind::argument, "profile_report: duplicate model name ", row.model);
    }
    const auto energies = relative_energy(counts);
    for (ProfileRow& row : rows) row.relative_energy = energies.at(row.model);

    std::sort(rows.begin(), rows.end(), [](const ProfileRow& a, const ProfileRow& b) {
        return a.parameters != b.parameters ? a.parameters > b.parameters : a.model < b.model;
    });
    return ProfileTable{std::move(rows)};
}

std::string profile_to_csv(const ProfileTable& table) {
    std::string out = "model,parameters,flops,relative_energy\n";
    char row[192];
    for (const ProfileRow& r : table.rows) {
        std::snprintf(row, sizeof row, "%s,%lld,%lld,%.2f\n", r.model.c_str(),
                      static_cast<long long>(r.parameters), static_cast<long long>(r.flops),
                      r.relative_energy);
        out += row;
    }
    return out;
}

ProfileTable profile_from_csv(const std::string& csv) {
    std::istringstream is(csv);
    std::string line;
    if (!std::getline(is, line) || line != "model,parameters,flops,relative_energy")
        fail(ErrorKind::decode, "profile csv: missing or wrong header");
    ProfileTable table;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        ProfileRow r;
        std::string field;
        if (!std::getline(row, r.model, ',')) fail(ErrorKind::decode, "profile csv: bad row ", line);
        try {
            if (!std::getline(row, field, ',')) throw std::invalid_argument("parameters");
            r.parameters = std::stoll(field);
            if (!std::getline(row, field, ',')) throw std::invalid_argument("flops");
            r.flops = std::stoll(field);
            if (!std::getline(row, field, ',')) throw std::invalid_argument("relative_energy");
            r.relative_energy = std::stod(field);
        } catch (const std::exception&) {
            fail(ErrorKind::decode, "profile csv: bad row ", line);
        }
        table.rows.push_back(std::move(r));
    }
    return table;
}

std::string profile_to_text(const ProfileTable& table) {
    std::size_t name_w = std::string("model").size();
    for (const ProfileRow& r : table.rows) name_w = std::max(name_w, r.model.size());
    std::string out;
    char line[256];
    std::snprintf(line, sizeof line, "%-*s  %12s  %14s  %15s\n", static_cast<int>(name_w), "model",
                  "parameters", "flops", "relative_energy");
    out += line;
    for (const ProfileRow& r : table.rows) {
        std::snprintf(line, sizeof line, "%-*s  %12lld  %14lld  %15.2f\n",
                      static_cast<int>(name_w), r.model.c_str(),
                      static_cast<long long>(r.parameters), static_cast<long long>(r.flops),
                      r.relative_energy);
        out += line;
    }
    return out;
}

ProfileRow profile_model(ModelGraph& model) {
    ProfileRow row;
    row.model = model.name();
    row.parameters = model.parameter_count();
    row.flops = model.flops();
    return row;
}

} // namespace greenleaf
