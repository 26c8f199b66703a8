#include "quadtrack/report.hpp"

#include <algorithm>
#include <numeric>

#include <nlohmann/json.hpp>

#include "quadtrack/error.hpp"

namespace quadtrack {

using nlohmann::json;

namespace {

json curve_table(const std::vector<double>& values, double (*threshold)(std::size_t)) {
    json rows = json::array();
    for (std::size_t i = 0; i < values.size(); ++i) rows.push_back({threshold(i), values[i]});
    return rows;
}

json curves_json(const Curves& c) {
    return {{"headline",
             {{"precision@20", c.precision_at_20},
              {"success@0.5", c.success_at_50},
              {"auc", c.auc},
              {"mean_iou", c.mean_iou},
              {"mean_center_error", c.mean_center_error},
              {"frames", c.frames}}},
            {"precision_curve", curve_table(c.precision, precision_threshold)},
            {"success_curve", curve_table(c.success, success_threshold)}};
}

std::vector<double> read_table(const json& rows, std::size_t expected, double (*threshold)(std::size_t)) {
    if (!rows.is_array() || rows.size() != expected) throw DataError("report: curve table has the wrong length");
    std::vector<double> out;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].at(0).get<double>() != threshold(i)) throw DataError("report: unexpected curve threshold");
        out.push_back(rows[i].at(1).get<double>());
    }
    return out;
}

Curves read_curves(const json& j) {
    Curves c;
    const json& h = j.at("headline");
    c.precision_at_20 = h.at("precision@20").get<double>();
    c.success_at_50 = h.at("success@0.5").get<double>();
    c.auc = h.at("auc").get<double>();
    c.mean_iou = h.at("mean_iou").get<double>();
    c.mean_center_error = h.at("mean_center_error").get<double>();
    c.frames = h.at("frames").get<std::size_t>();
    c.precision = read_table(j.at("precision_curve"), kPrecisionThresholds, precision_threshold);
    c.success = read_table(j.at("success_curve"), kSuccessThresholds, success_threshold);
    return c;
}

}  // namespace

std::string format_report(const std::vector<ReportEntry>& entries, const ReportOptions& options) {
    json list = json::array();
    for (const auto& e : entries) {
        json j = curves_json(e.result.aggregate);
        j["name"] = e.name;
        j["protocol"] = to_string(e.result.protocol);
        std::size_t runs = 0;
        for (const auto& s : e.result.sequences) runs += s.runs;
        j["runs"] = runs;
        if (options.include_sequences) {
            json seqs = json::array();
            for (const auto& s : e.result.sequences) {
                json sj = curves_json(s.curves);
                sj["name"] = s.name;
                sj["runs"] = s.runs;
                seqs.push_back(std::move(sj));
            }
            j["sequences"] = std::move(seqs);
        }
        if (!e.training.empty()) j["training"] = json::parse(e.training);
        if (options.include_timing) {
            j["throughput"] = {{"tracked_frames", e.result.tracked_frames},
                               {"seconds", e.result.seconds},
                               {"fps", e.result.fps()}};
        }
        list.push_back(std::move(j));
    }
    std::vector<std::size_t> order(entries.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return entries[a].result.aggregate.auc > entries[b].result.aggregate.auc;
    });
    json ranking = json::array();
    for (std::size_t i : order) ranking.push_back(entries[i].name);
    json doc{{"entries", list}, {"ranking_by_auc", ranking}};
    return doc.dump(2) + "\n";
}

const ParsedEntry& ParsedReport::entry(const std::string& name) const {
    for (const auto& e : entries) {
        if (e.name == name) return e;
    }
    throw DataError("report has no entry named '" + name + "'");
}

ParsedReport parse_report(const std::string& text) {
    ParsedReport r;
    try {
        const json doc = json::parse(text);
        for (const auto& j : doc.at("entries")) {
            ParsedEntry e;
            e.name = j.at("name").get<std::string>();
            e.protocol = j.at("protocol").get<std::string>();
            e.aggregate = read_curves(j);
            if (j.contains("sequences")) {
                for (const auto& sj : j.at("sequences")) {
                    e.sequences.push_back({sj.at("name").get<std::string>(), sj.at("runs").get<std::size_t>(),
                                           read_curves(sj)});
                }
            }
            if (j.contains("throughput")) e.fps = j.at("throughput").at("fps").get<double>();
            r.entries.push_back(std::move(e));
        }
        for (const auto& n : doc.at("ranking_by_auc")) r.ranking.push_back(n.get<std::string>());
    } catch (const json::exception& ex) {
        throw DataError(std::string("malformed report: ") + ex.what());
    }
    return r;
}

}  // namespace quadtrack
