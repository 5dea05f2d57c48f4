#include "safa/results.hpp"

#include <charconv>
#include <json.hpp>
#include <ostream>
#include <sstream>

#include "safa/hash.hpp"

namespace safa {

namespace {

using json = nlohmann::ordered_json;

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json config_object(const std::string& text) {
  json out = json::object();
  std::istringstream in(text);
  std::string line, section;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.front() == '[') {
      section = line.substr(1, line.size() - 2);
      out[section] = json::object();
      continue;
    }
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    out[section][line.substr(0, eq)] = line.substr(eq + 3);
  }
  return out;
}

json energy_object(const EnergyReport& r) {
  json layers = json::array();
  for (const auto& l : r.layers)
    layers.push_back({{"layer", l.layer},
                      {"flops", l.flops},
                      {"sops", l.sops},
                      {"snn_pj", l.snn_pj},
                      {"ann_pj", l.ann_pj},
                      {"ratio", l.ratio},
                      {"snn_cheaper", l.snn_cheaper}});
  return {{"e_mac_pj", r.constants.e_mac},
          {"e_ac_pj", r.constants.e_ac},
          {"layers", layers},
          {"total_snn_pj", r.total_snn_pj},
          {"total_ann_pj", r.total_ann_pj},
          {"total_snn_j", r.total_snn_j()},
          {"total_ann_j", r.total_ann_j()}};
}

std::string cell(const std::optional<double>& v) {
  if (!v) return {};
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, *v);
  return std::string(buf, res.ptr);
}

std::string cell(double v) { return cell(std::optional<double>(v)); }

}  // namespace

std::string results_json(const ResultsDocument& doc, bool canonical) {
  json j;
  j["schema"] = kResultsSchema;
  j["artifact_version"] = kArtifactVersion;
  j["command"] = doc.command;
  j["seed"] = doc.seed;
  j["config_fingerprint"] = to_hex(doc.fingerprint);
  j["config"] = config_object(doc.config_text);

  if (doc.train) {
    json t;
    t["epochs"] = doc.train->epoch_loss.size();
    t["epoch_loss"] = doc.train->epoch_loss;
    t["train_accuracy"] = doc.train->train_accuracy;
    j["training"] = t;
  }
  if (doc.readout_test_accuracy) j["readout_test_accuracy"] = *doc.readout_test_accuracy;

  json sessions = json::array();
  json curve = json::array();
  for (std::size_t i = 0; i < doc.results.sessions.size(); ++i) {
    const auto& m = doc.results.sessions[i];
    const auto& b = m.breakdown;
    json layer_sparsity = json::array();
    for (double r : m.layer_rates) layer_sparsity.push_back(1.0 - r);
    json s = {{"session", m.session},
              {"classes_seen", m.classes_seen},
              {"samples", m.samples},
              {"accuracy", m.accuracy},
              {"base_accuracy", m.base_accuracy},
              {"novel_accuracy", optional_number(m.novel_accuracy)},
              {"hacc", optional_number(m.hacc)},
              {"confusion",
               {{"cbn", b.cbn},
                {"mbn", b.mbn},
                {"mnn", b.mnn},
                {"cnn", b.cnn},
                {"mbr", optional_number(b.mbr)},
                {"mar", optional_number(b.mar)}}},
              {"layer_rates", m.layer_rates},
              {"layer_sparsity", layer_sparsity},
              {"mean_rate", m.mean_rate},
              {"sparsity", 1.0 - m.mean_rate},
              {"abstained", m.abstained}};
    if (i < doc.weight_hashes.size()) s["weights_hash"] = to_hex(doc.weight_hashes[i]);
    sessions.push_back(s);
    curve.push_back({{"session", m.session}, {"mean_rate", m.mean_rate}, {"sparsity", 1.0 - m.mean_rate}});
  }
  j["sessions"] = sessions;
  if (!doc.results.sessions.empty()) {
    const auto acc = doc.results.accuracies();
    const auto ad = avg_and_delta_last(acc, acc.front());
    j["summary"] = {{"average_accuracy", ad.avg},
                    {"final_accuracy", acc.back()},
                    {"drop_from_base", ad.delta_last}};
  }
  j["sparsity_curve"] = curve;
  if (doc.energy) j["energy"] = energy_object(*doc.energy);
  if (!canonical) {
    json w = json::object();
    for (const auto& [phase, secs] : doc.wall_clock_s) w[phase] = secs;
    j["wall_clock_s"] = w;
  }
  return j.dump(2) + "\n";
}

std::string energy_report_json(const EnergyReport& report) {
  json j;
  j["schema"] = kResultsSchema;
  j["artifact_version"] = kArtifactVersion;
  j["command"] = "energy-report";
  j["energy"] = energy_object(report);
  return j.dump(2) + "\n";
}

void write_session_csv(std::ostream& os, const SessionResults& results) {
  os << "session,accuracy,hacc,mbr,mar,sparsity\n";
  for (const auto& m : results.sessions)
    os << m.session << ',' << cell(m.accuracy) << ',' << cell(m.hacc) << ',' << cell(m.breakdown.mbr) << ','
       << cell(m.breakdown.mar) << ',' << cell(1.0 - m.mean_rate) << '\n';
}

void write_predictions_csv(std::ostream& os, const std::vector<Evaluation>& evaluations) {
  os << "session,id,label,prediction,similarity\n";
  for (const auto& ev : evaluations)
    for (std::size_t i = 0; i < ev.sample_ids.size(); ++i)
      os << ev.metrics.session << ',' << ev.sample_ids[i] << ',' << ev.labels[i] << ',' << ev.predictions[i] << ','
         << cell(ev.similarity[i]) << '\n';
}

}  // namespace safa
