#include "zsugr/dataset.hpp"

#include "zsugr/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace zsugr::dataset {

using json = nlohmann::json;

std::optional<int> Manifest::class_id(const std::string& name) const {
    for (const auto& c : classes)
        if (c.name == name) return c.id;
    return std::nullopt;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    fields.push_back(cur);
    return fields;
}

} // namespace

Manifest load_manifest_text(const std::string& text, const std::string& origin,
                            const std::vector<std::string>& class_roster) {
    Manifest manifest;
    std::map<std::string, int> class_index;
    if (!class_roster.empty()) {
        for (const auto& name : class_roster) {
            int id = static_cast<int>(manifest.classes.size());
            manifest.classes.push_back({id, name});
            class_index[name] = id;
        }
    }

    std::istringstream is(text);
    std::string line;
    std::size_t row = 0;
    bool header_seen = false;
    std::set<std::string> ids;
    while (std::getline(is, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        auto fields = split_csv_line(line);
        if (!header_seen) {
            if (fields.size() < 3 || fields[0] != "sample_id" || fields[1] != "image_ref" ||
                fields[2] != "class_name")
                throw std::runtime_error(origin + ": missing 'sample_id,image_ref,class_name' header");
            header_seen = true;
            continue;
        }
        if (fields.size() != 3)
            throw std::runtime_error(origin + ": row " + std::to_string(row) +
                                     ": expected 3 fields, got " + std::to_string(fields.size()));
        const std::string& sample_id = fields[0];
        const std::string& image_ref = fields[1];
        const std::string& class_name = fields[2];
        if (sample_id.empty() || class_name.empty())
            throw std::runtime_error(origin + ": row " + std::to_string(row) + ": empty field");
        if (!ids.insert(sample_id).second)
            throw std::runtime_error(origin + ": row " + std::to_string(row) +
                                     ": duplicate sample_id '" + sample_id + "'");
        auto it = class_index.find(class_name);
        int cid;
        if (it == class_index.end()) {
            if (!class_roster.empty())
                throw std::runtime_error(origin + ": row " + std::to_string(row) +
                                         ": unknown class name '" + class_name + "'");
            cid = static_cast<int>(manifest.classes.size());
            manifest.classes.push_back({cid, class_name});
            class_index[class_name] = cid;
        } else {
            cid = it->second;
        }
        manifest.records.push_back({sample_id, image_ref, cid});
    }
    if (manifest.records.empty()) throw std::runtime_error(origin + ": no records");
    return manifest;
}

Manifest load_manifest(const std::filesystem::path& source,
                       const std::vector<std::string>& class_roster) {
    std::ifstream is(source);
    if (!is) throw std::runtime_error("manifest file not found: " + source.string());
    std::ostringstream buf;
    buf << is.rdbuf();
    return load_manifest_text(buf.str(), source.string(), class_roster);
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::trunc);
    os << "sample_id,image_ref,class_name\n";
    for (const auto& r : manifest.records)
        os << r.sample_id << "," << r.image_ref << ","
           << manifest.classes[static_cast<std::size_t>(r.class_id)].name << "\n";
}

SplitOutcome generate_splits(const Manifest& manifest, const SplitParams& params) {
    const int n_classes = static_cast<int>(manifest.classes.size());
    if (params.n_seen + params.n_unseen != n_classes)
        throw std::invalid_argument("n_seen + n_unseen must equal the class count (" +
                                    std::to_string(n_classes) + ")");
    if (params.holdout_fraction <= 0.0 || params.holdout_fraction >= 1.0)
        throw std::invalid_argument("holdout_fraction must lie in (0,1)");

    // Per-class sample ids in manifest order.
    std::vector<std::vector<std::string>> by_class(static_cast<std::size_t>(n_classes));
    for (const auto& r : manifest.records)
        by_class[static_cast<std::size_t>(r.class_id)].push_back(r.sample_id);

    SplitOutcome outcome;
    for (int s = 0; s < params.n_splits; ++s) {
        // Each split runs on its own derived sub-seed, so adding splits never
        // perturbs earlier ones.
        Rng rng(derive_seed(params.rng_seed, "split", static_cast<std::uint64_t>(s)));
        SplitSpec spec;
        spec.split_index = s;
        spec.rng_seed = params.rng_seed;

        std::vector<int> class_ids(static_cast<std::size_t>(n_classes));
        for (int i = 0; i < n_classes; ++i) class_ids[static_cast<std::size_t>(i)] = i;
        if (static_cast<std::size_t>(s) < params.fixed_seen_classes.size() &&
            !params.fixed_seen_classes[static_cast<std::size_t>(s)].empty()) {
            spec.seen_classes = params.fixed_seen_classes[static_cast<std::size_t>(s)];
            if (static_cast<int>(spec.seen_classes.size()) != params.n_seen)
                throw std::invalid_argument("fixed seen-class list has wrong size for split " +
                                            std::to_string(s));
            std::set<int> seen_set(spec.seen_classes.begin(), spec.seen_classes.end());
            for (int c : class_ids)
                if (!seen_set.count(c)) spec.unseen_classes.push_back(c);
        } else {
            shuffle_in_place(class_ids, rng);
            spec.seen_classes.assign(class_ids.begin(), class_ids.begin() + params.n_seen);
            spec.unseen_classes.assign(class_ids.begin() + params.n_seen, class_ids.end());
        }
        std::sort(spec.seen_classes.begin(), spec.seen_classes.end());
        std::sort(spec.unseen_classes.begin(), spec.unseen_classes.end());

        for (int c : spec.unseen_classes)
            for (const auto& id : by_class[static_cast<std::size_t>(c)])
                spec.unseen_test_ids.push_back(id);

        // Stratified holdout: per seen class, round-half-up of the fraction
        // goes to the test-time-seen roster; the rest stays in training.
        for (int c : spec.seen_classes) {
            auto pool = by_class[static_cast<std::size_t>(c)];
            const auto n = pool.size();
            auto want = static_cast<std::size_t>(
                std::floor(params.holdout_fraction * static_cast<double>(n) + 0.5));
            if (want == 0 && n > 0)
                outcome.warnings.push_back("split " + std::to_string(s) + ": class '" +
                                           manifest.classes[static_cast<std::size_t>(c)].name +
                                           "' has too few samples for a holdout (" +
                                           std::to_string(n) + ")");
            shuffle_in_place(pool, rng);
            for (std::size_t i = 0; i < pool.size(); ++i) {
                if (i < want)
                    spec.seen_test_ids.push_back(pool[i]);
                else
                    spec.seen_train_ids.push_back(pool[i]);
            }
        }
        std::sort(spec.seen_train_ids.begin(), spec.seen_train_ids.end());
        std::sort(spec.seen_test_ids.begin(), spec.seen_test_ids.end());
        std::sort(spec.unseen_test_ids.begin(), spec.unseen_test_ids.end());
        outcome.splits.push_back(std::move(spec));
    }
    return outcome;
}

std::vector<std::string> validate_split(const SplitSpec& split, const Manifest& manifest) {
    std::vector<std::string> violations;
    std::set<int> seen(split.seen_classes.begin(), split.seen_classes.end());
    std::set<int> unseen(split.unseen_classes.begin(), split.unseen_classes.end());
    for (int c : seen)
        if (unseen.count(c)) violations.push_back("class overlap: id " + std::to_string(c));

    std::map<std::string, int> class_of;
    for (const auto& r : manifest.records) class_of[r.sample_id] = r.class_id;

    std::map<std::string, const char*> roster_of;
    auto check_roster = [&](const std::vector<std::string>& ids, const char* roster,
                            const std::set<int>& allowed, const char* kind) {
        for (const auto& id : ids) {
            auto it = class_of.find(id);
            if (it == class_of.end()) {
                violations.push_back(std::string(roster) + ": unknown sample id '" + id + "'");
                continue;
            }
            if (!allowed.count(it->second))
                violations.push_back(std::string("leakage: ") + kind + " sample '" + id +
                                     "' has class " + std::to_string(it->second));
            auto [pos, inserted] = roster_of.try_emplace(id, roster);
            if (!inserted)
                violations.push_back("sample '" + id + "' appears in both " + pos->second +
                                     " and " + roster);
        }
    };
    check_roster(split.seen_train_ids, "seen_train", seen, "seen");
    check_roster(split.seen_test_ids, "seen_test", seen, "seen");
    check_roster(split.unseen_test_ids, "unseen_test", unseen, "unseen");

    if (roster_of.size() != class_of.size())
        violations.push_back("rosters cover " + std::to_string(roster_of.size()) +
                             " of " + std::to_string(class_of.size()) + " manifest samples");
    return violations;
}

std::string split_to_json(const SplitSpec& split) {
    json j;
    j["split_index"] = split.split_index;
    j["seen_classes"] = split.seen_classes;
    j["unseen_classes"] = split.unseen_classes;
    j["seen_train_ids"] = split.seen_train_ids;
    j["seen_test_ids"] = split.seen_test_ids;
    j["unseen_test_ids"] = split.unseen_test_ids;
    j["rng_seed"] = split.rng_seed;
    return j.dump(2);
}

SplitSpec split_from_json(const std::string& text) {
    json j = json::parse(text);
    SplitSpec s;
    s.split_index = j.at("split_index").get<int>();
    s.seen_classes = j.at("seen_classes").get<std::vector<int>>();
    s.unseen_classes = j.at("unseen_classes").get<std::vector<int>>();
    s.seen_train_ids = j.at("seen_train_ids").get<std::vector<std::string>>();
    s.seen_test_ids = j.at("seen_test_ids").get<std::vector<std::string>>();
    s.unseen_test_ids = j.at("unseen_test_ids").get<std::vector<std::string>>();
    s.rng_seed = j.at("rng_seed").get<std::uint64_t>();
    return s;
}

void save_split(const std::filesystem::path& path, const SplitSpec& split) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::trunc);
    os << split_to_json(split) << "\n";
}

SplitSpec load_split(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("split file not found: " + path.string());
    std::ostringstream buf;
    buf << is.rdbuf();
    return split_from_json(buf.str());
}

const std::vector<std::string>& caddy_class_names() {
    static const std::vector<std::string> names = {
        "start_comm", "end_comm", "up",    "down",          "photo", "backwards",
        "carry",      "boat",     "here",  "mosaic",        "num_delimiter", "one",
        "two",        "three",    "four",  "five"};
    return names;
}

const std::vector<int>& caddy_fixture_counts() {
    static const std::vector<int> counts = {2350, 1370, 1190, 850, 990, 1400, 1310, 2280,
                                            760,  1650, 800,  214, 204, 900,  1340, 870};
    return counts;
}

Manifest make_synthetic_manifest(const std::vector<int>& per_class_counts) {
    const auto& names = caddy_class_names();
    if (per_class_counts.size() != names.size())
        throw std::invalid_argument("expected one count per gesture class");
    Manifest manifest;
    for (std::size_t c = 0; c < names.size(); ++c)
        manifest.classes.push_back({static_cast<int>(c), names[c]});
    for (std::size_t c = 0; c < names.size(); ++c) {
        for (int i = 0; i < per_class_counts[c]; ++i) {
            SampleRecord r;
            r.image_ref = "syn:" + names[c] + ":" + std::to_string(i);
            r.sample_id = names[c] + "_" + std::to_string(i);
            r.class_id = static_cast<int>(c);
            manifest.records.push_back(std::move(r));
        }
    }
    return manifest;
}

} // namespace zsugr::dataset
