#include "immunize/report.hpp"

#include <json.hpp>

#include "immunize/util.hpp"

namespace immunize {

namespace {

// Table II ordering; psnr/ssim are built in, the rest come from plugins.
const std::vector<std::string> kCsvMetricColumns = {"psnr", "ssim", "vifp", "fsim", "lpips"};

std::string metric_cell(const MetricReport& metrics, const std::string& name) {
    auto it = metrics.values.find(name);
    if (it == metrics.values.end() || !it->second.has_value()) return "";
    return format_fixed(*it->second);
}

nlohmann::json verdict_to_json(const JudgeVerdict& v) {
    nlohmann::json obj;
    obj["judge"] = v.judge_id;
    obj["valid"] = v.valid;
    obj["semantic_mismatch"] = v.semantic_mismatch;
    obj["quality_degradation"] = v.perceptual_degradation;
    obj["success"] = v.success;
    obj["raw"] = v.raw_response;
    return obj;
}

JudgeVerdict verdict_from_json(const nlohmann::json& obj) {
    JudgeVerdict v;
    v.judge_id = obj.value("judge", "");
    v.valid = obj.value("valid", false);
    v.semantic_mismatch = obj.value("semantic_mismatch", false);
    v.perceptual_degradation = obj.value("quality_degradation", false);
    v.success = obj.value("success", false);
    v.raw_response = obj.value("raw", "");
    return v;
}

nlohmann::json isr_cell_json(const IsrCell& cell) {
    nlohmann::json obj;
    obj["n_success"] = cell.n_success;
    obj["n_total"] = cell.n_total;
    obj["isr"] = cell.isr();
    return obj;
}

}  // namespace

std::string records_to_csv(std::span<const EvaluationRecord> records) {
    if (records.empty()) {
        throw ConfigError("records_to_csv: no records to report");
    }
    std::string out = "sample,prompt_mode,psnr,ssim,vifp,fsim,lpips,success\n";
    for (const EvaluationRecord& rec : records) {
        if (rec.excluded) continue;
        out += rec.sample_id;
        out += ',';
        out += rec.prompt_mode;
        for (const std::string& name : kCsvMetricColumns) {
            out += ',';
            out += metric_cell(rec.metrics, name);
        }
        out += ',';
        out += rec.final_success ? "true" : "false";
        out += '\n';
    }
    return out;
}

std::string records_to_json(std::span<const EvaluationRecord> records) {
    nlohmann::json list = nlohmann::json::array();
    for (const EvaluationRecord& rec : records) {
        nlohmann::json obj;
        obj["sample"] = rec.sample_id;
        obj["category"] = rec.category;
        obj["prompt_mode"] = rec.prompt_mode;
        obj["prompt_index"] = rec.prompt_index;
        obj["edit_prompt"] = rec.edit_prompt;
        obj["paths"] = {{"original", rec.original_path},
                        {"immunized", rec.immunized_path},
                        {"edited_original", rec.edited_original_path},
                        {"edited_immunized", rec.edited_immunized_path}};
        nlohmann::json metric_values = nlohmann::json::object();
        nlohmann::json orientations = nlohmann::json::object();
        for (const std::string& name : rec.metrics.names) {
            const auto& value = rec.metrics.values.at(name);
            metric_values[name] = value ? nlohmann::json(*value) : nlohmann::json(nullptr);
            orientations[name] =
                rec.metrics.orientation.at(name) == MetricOrientation::LowerBetter ? "lower"
                                                                                   : "higher";
        }
        obj["metrics"] = std::move(metric_values);
        obj["metric_order"] = rec.metrics.names;
        obj["metric_orientation"] = std::move(orientations);
        nlohmann::json verdicts = nlohmann::json::array();
        for (const JudgeVerdict& v : rec.verdicts) verdicts.push_back(verdict_to_json(v));
        obj["verdicts"] = std::move(verdicts);
        nlohmann::json judge_configs = nlohmann::json::array();
        for (const JudgeConfigNote& n : rec.judge_configs) {
            judge_configs.push_back(
                {{"judge", n.judge_id}, {"model", n.model}, {"temperature", n.temperature}});
        }
        obj["judge_configs"] = std::move(judge_configs);
        obj["final_success"] = rec.final_success;
        obj["excluded"] = rec.excluded;
        obj["exclusion_reason"] = rec.exclusion_reason;
        list.push_back(std::move(obj));
    }
    return list.dump(2) + "\n";
}

std::vector<EvaluationRecord> records_from_json(const std::string& text) {
    nlohmann::json list = nlohmann::json::parse(text, nullptr, false);
    if (list.is_discarded() || !list.is_array()) {
        throw IoError("records JSON: expected a top-level array");
    }
    std::vector<EvaluationRecord> records;
    records.reserve(list.size());
    for (const auto& obj : list) {
        EvaluationRecord rec;
        rec.sample_id = obj.value("sample", "");
        rec.category = obj.value("category", "");
        rec.prompt_mode = obj.value("prompt_mode", "");
        rec.prompt_index = obj.value("prompt_index", 0);
        rec.edit_prompt = obj.value("edit_prompt", "");
        if (obj.contains("paths")) {
            const auto& paths = obj["paths"];
            rec.original_path = paths.value("original", "");
            rec.immunized_path = paths.value("immunized", "");
            rec.edited_original_path = paths.value("edited_original", "");
            rec.edited_immunized_path = paths.value("edited_immunized", "");
        }
        if (obj.contains("metric_order")) {
            for (const auto& name_json : obj["metric_order"]) {
                const std::string name = name_json.get<std::string>();
                rec.metrics.names.push_back(name);
                const auto& value = obj["metrics"][name];
                rec.metrics.values[name] =
                    value.is_null() ? std::nullopt : std::optional<double>(value.get<double>());
                rec.metrics.orientation[name] =
                    obj["metric_orientation"].value(name, "lower") == std::string("higher")
                        ? MetricOrientation::HigherBetter
                        : MetricOrientation::LowerBetter;
            }
        }
        if (obj.contains("verdicts")) {
            for (const auto& v : obj["verdicts"]) rec.verdicts.push_back(verdict_from_json(v));
        }
        if (obj.contains("judge_configs")) {
            for (const auto& n : obj["judge_configs"]) {
                rec.judge_configs.push_back(JudgeConfigNote{
                    n.value("judge", ""), n.value("model", ""), n.value("temperature", 0.0)});
            }
        }
        rec.final_success = obj.value("final_success", false);
        rec.excluded = obj.value("excluded", false);
        rec.exclusion_reason = obj.value("exclusion_reason", "");
        records.push_back(std::move(rec));
    }
    return records;
}

std::string summary_to_json(const RunSummary& summary,
                            std::span<const EvaluationRecord> records) {
    nlohmann::json obj;
    nlohmann::json isr;
    isr["n_success"] = summary.isr.n_success;
    isr["n_total"] = summary.isr.n_total;
    isr["n_excluded"] = summary.isr.n_excluded;
    isr["isr"] = summary.isr.isr;
    nlohmann::json by_mode = nlohmann::json::object();
    for (const auto& [mode, cell] : summary.isr.by_prompt_mode) {
        by_mode[mode] = isr_cell_json(cell);
    }
    nlohmann::json by_category = nlohmann::json::object();
    for (const auto& [category, cell] : summary.isr.by_category) {
        by_category[category] = isr_cell_json(cell);
    }
    isr["by_prompt_mode"] = std::move(by_mode);
    isr["by_category"] = std::move(by_category);
    obj["isr"] = std::move(isr);

    nlohmann::json means = nlohmann::json::object();
    for (const auto& [mode, by_name] : summary.metric_means_by_mode) {
        nlohmann::json mode_obj = nlohmann::json::object();
        for (const auto& [name, value] : by_name) mode_obj[name] = value;
        means[mode] = std::move(mode_obj);
    }
    obj["metric_means"] = std::move(means);

    nlohmann::json exclusions = nlohmann::json::array();
    for (const EvaluationRecord& rec : records) {
        if (!rec.excluded) continue;
        exclusions.push_back({{"sample", rec.sample_id},
                              {"prompt_mode", rec.prompt_mode},
                              {"prompt_index", rec.prompt_index},
                              {"reason", rec.exclusion_reason}});
    }
    obj["exclusions"] = std::move(exclusions);
    return obj.dump(2) + "\n";
}

void emit_report(std::span<const EvaluationRecord> records, const RunSummary& summary,
                 const std::filesystem::path& dir) {
    if (records.empty()) {
        throw ConfigError("emit_report: no records to report");
    }
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) {
        throw IoError("emit_report: cannot create output directory " + dir.string());
    }
    atomic_write(dir / "records.csv", records_to_csv(records));
    atomic_write(dir / "records.json", records_to_json(records));
    atomic_write(dir / "summary.json", summary_to_json(summary, records));
}

std::string ablation_to_csv(std::span<const AblationRow> rows) {
    if (rows.empty()) {
        throw ConfigError("ablation_to_csv: no rows to report");
    }
    std::string out = "variant,psnr,ssim,vifp,fsim,lpips,isr\n";
    for (const AblationRow& row : rows) {
        out += row.variant;
        for (const std::string& name : kCsvMetricColumns) {
            out += ',';
            auto it = row.metric_means.find(name);
            out += it == row.metric_means.end() ? "" : format_fixed(it->second);
        }
        out += ',';
        out += format_fixed(row.isr);
        out += '\n';
    }
    return out;
}

void emit_ablation_report(std::span<const AblationRow> rows, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    atomic_write(dir / "ablation.csv", ablation_to_csv(rows));
    nlohmann::json list = nlohmann::json::array();
    for (const AblationRow& row : rows) {
        nlohmann::json obj;
        obj["variant"] = row.variant;
        nlohmann::json means = nlohmann::json::object();
        for (const auto& [name, value] : row.metric_means) means[name] = value;
        obj["metric_means"] = std::move(means);
        obj["isr"] = row.isr;
        list.push_back(std::move(obj));
    }
    atomic_write(dir / "ablation.json", list.dump(2) + "\n");
}

}  // namespace immunize
