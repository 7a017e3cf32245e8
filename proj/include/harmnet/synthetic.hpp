#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "harmnet/data.hpp"
#include "harmnet/error.hpp"

namespace harmnet {

struct TemplateEntry {
  std::string category;
  std::string text;
};

// Corpus recipe: per-severity template banks carrying the class-indicative
// phrases, shared filler sentences and noise lexicon, priors over severity
// codes, and a length model (number of filler sentences around the core).
struct SyntheticSpec {
  std::map<std::string, std::vector<TemplateEntry>> banks;
  std::vector<std::pair<std::string, double>> priors;
  double noise_rate = 0.0;
  std::vector<std::string> noise_lexicon;
  std::vector<std::string> filler_sentences;
  int min_filler = 0;
  int max_filler = 0;
};

inline std::vector<Report> gen_synthetic(const SyntheticSpec& spec, int count,
                                         std::uint64_t seed) {
  double total = 0.0;
  for (const auto& [code, p] : spec.priors) {
    if (!is_severity_code(code))
      throw ConfigError("synthetic: unknown severity code '" + code + "'");
    if (p < 0.0) throw ConfigError("synthetic: negative prior for " + code);
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw ConfigError("synthetic: priors sum to " + std::to_string(total) +
                      ", expected 1");
  for (const auto& [code, p] : spec.priors) {
    if (p == 0.0) continue;
    auto it = spec.banks.find(code);
    if (it == spec.banks.end() || it->second.empty())
      throw ConfigError("synthetic: empty template bank for severity " + code);
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<Report> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    // severity ~ priors
    double r = uni(rng), acc = 0.0;
    std::string code = spec.priors.back().first;
    for (const auto& [c, p] : spec.priors) {
      acc += p;
      if (r < acc) {
        code = c;
        break;
      }
    }
    const auto& bank = spec.banks.at(code);
    const auto& entry = bank[static_cast<std::size_t>(
        rng() % static_cast<std::uint64_t>(bank.size()))];

    auto pick_fillers = [&](std::vector<std::string>& into) {
      if (spec.filler_sentences.empty() || spec.max_filler <= 0) return;
      const int span = spec.max_filler - spec.min_filler + 1;
      const int n = spec.min_filler +
                    static_cast<int>(rng() % static_cast<std::uint64_t>(span));
      for (int s = 0; s < n; ++s)
        into.push_back(spec.filler_sentences[static_cast<std::size_t>(
            rng() % static_cast<std::uint64_t>(spec.filler_sentences.size()))]);
    };

    std::vector<std::string> sentences;
    pick_fillers(sentences);
    sentences.push_back(entry.text);
    pick_fillers(sentences);

    std::string text;
    for (const auto& s : sentences) {
      for (const auto& tok : tokenize(s)) {
        if (!text.empty()) text += ' ';
        text += tok;
        if (spec.noise_rate > 0.0 && !spec.noise_lexicon.empty() &&
            uni(rng) < spec.noise_rate) {
          text += ' ';
          text += spec.noise_lexicon[static_cast<std::size_t>(
              rng() % static_cast<std::uint64_t>(spec.noise_lexicon.size()))];
        }
      }
    }
    out.push_back(Report{text, code, entry.category, json()});
  }
  return out;
}

namespace detail {

// Deliberately ambiguous unigrams: "injury", "harm", "fall", "bleeding",
// "medication" and the negator "no" appear on both sides of the harm split;
// the class signal lives in short phrases ("no injury noted" vs "sustained
// a deep laceration"), which bag-of-unigram baselines cannot separate.
inline std::map<std::string, std::vector<TemplateEntry>> clinical_banks() {
  std::map<std::string, std::vector<TemplateEntry>> banks;
  banks["A"] = {
      {"Medication/Fluid",
       "pharmacy flagged look alike vials stored side by side creating risk "
       "of medication mix up no error reached any patient"},
      {"Safety/Security",
       "supply cart found blocking the corridor creating a potential fall "
       "hazard removed before anyone was harmed"},
      {"Equipment/Supplies/Devices",
       "two infusion pumps of different models have confusing interfaces "
       "raised as an unsafe condition no injury occurred"},
      {"Lab/Specimen",
       "specimen labels print with faint ink creating risk of mismatch "
       "reported to the laboratory no patient affected"},
      {"Fall",
       "bed alarm found disconnected during safety rounds reconnected "
       "promptly patient never attempted to stand no harm"},
      {"Patient ID/Documentation",
       "two patients on the unit share similar names flagged as an unsafe "
       "condition armbands double checked no error occurred"},
  };
  banks["B1"] = {
      {"Medication/Fluid",
       "wrong medication label discovered by chance before the dose was "
       "dispensed order corrected no injury to the patient"},
      {"Lab/Specimen",
       "blood tube for the wrong patient noticed before the draw was "
       "performed no specimen collected no harm done"},
      {"Medication/Fluid",
       "pharmacy caught a tenfold dosing error on the order before "
       "preparation the patient never received the dose"},
      {"Diagnostic Imaging",
       "imaging order placed on the wrong chart noticed by the technician "
       "before the scan no exposure occurred"},
      {"Surgery/Procedure",
       "consent form listed the wrong side error identified in the holding "
       "area before the procedure started no harm"},
  };
  banks["B2"] = {
      {"Lab/Specimen",
       "mislabeled specimen identified during routine double check in the "
       "laboratory relabeled correctly no impact on care"},
      {"Medication/Fluid",
       "nurse verification caught an expired vial during the second check "
       "replaced before administration no injury resulted"},
      {"Transfusion",
       "blood bank crossmatch verification detected a mismatch and the unit "
       "was quarantined before release no harm to patient"},
      {"Patient ID/Documentation",
       "barcode scan rejected the wrong armband at the bedside the error "
       "was corrected before the medication was given"},
      {"Lines/Tubes/Drain",
       "tubing misconnection spotted during hourly rounding corrected "
       "before any fluid infused no adverse effect"},
  };
  banks["C"] = {
      {"Medication/Fluid",
       "multivitamin was not ordered on admission dose given the next "
       "morning patient condition unchanged no injury noted"},
      {"Medication/Fluid",
       "antacid administered one hour late patient reported no discomfort "
       "assessment unchanged no harm resulted"},
      {"Diagnostic Imaging",
       "duplicate chest xray performed due to an order entry error no "
       "change in management patient tolerated it well"},
      {"Lab/Specimen",
       "routine lab draw repeated because the first tube clotted patient "
       "experienced no injury beyond the repeat stick"},
      {"Patient ID/Documentation",
       "allergy band missing on arrival replaced after reconciliation "
       "patient received correct medications throughout no harm"},
      {"Fall",
       "patient slid to the floor while reaching for the tray assisted up "
       "immediately skin intact no injury observed"},
  };
  banks["D"] = {
      {"Medication/Fluid",
       "regular release metoprolol given instead of extended release "
       "patient monitored overnight vitals remained stable no harm"},
      {"Lines/Tubes/Drain",
       "infusion pump set at the wrong rate corrected within minutes "
       "telemetry monitoring continued no injury developed"},
      {"Medication/Fluid",
       "anticoagulant dose delayed four hours coagulation labs followed "
       "closely results stayed within range no harm resulted"},
      {"Airway Management",
       "oxygen flow set lower than ordered saturation watched hourly "
       "remained above target no intervention beyond monitoring"},
      {"Transfusion",
       "transfusion started slower than ordered rate corrected patient "
       "observed for reaction none occurred no injury"},
      {"Surgery/Procedure",
       "retained sponge count discrepancy triggered an xray which was "
       "negative patient monitored no harm identified"},
  };
  banks["E"] = {
      {"Fall",
       "patient found on the floor after an unassisted fall sustained "
       "bruising to the left hip required pain medication"},
      {"Fall",
       "patient fell while ambulating to the bathroom sustained a deep "
       "laceration to the forearm which required sutures"},
      {"Medication/Fluid",
       "blood pressure medication omitted from the orders patient became "
       "hypertensive required additional doses to recover"},
      {"Skin/Tissue",
       "pressure injury stage two discovered on the sacrum during bathing "
       "wound care initiated dressing changes required"},
      {"Lines/Tubes/Drain",
       "iv infiltration caused painful swelling of the hand warm compress "
       "applied and the line was resited temporary harm"},
      {"Medication/Fluid",
       "insulin given without checking glucose patient became hypoglycemic "
       "and diaphoretic required dextrose to recover"},
  };
  banks["F"] = {
      {"Medication/Fluid",
       "anticoagulant ordered daily instead of every other day patient "
       "developed bleeding requiring prolonged hospitalization"},
      {"Surgery/Procedure",
       "surgical site infection after the procedure required readmission "
       "and an extended course of intravenous antibiotics"},
      {"Medication/Fluid",
       "opioid dosing error caused respiratory depression patient needed "
       "naloxone and an additional two days of hospitalization"},
      {"Complication of P/T/T",
       "post procedure hematoma expanded requiring transfusion and a "
       "prolonged inpatient stay for observation and treatment"},
      {"Fall",
       "fall from the bedside commode resulted in a wrist fracture casting "
       "and extended hospitalization were required"},
  };
  banks["G"] = {
      {"Lines/Tubes/Drain",
       "delayed recognition of an infiltrated vesicant caused permanent "
       "tissue damage to the forearm requiring reconstructive care"},
      {"Surgery/Procedure",
       "nerve injury during the procedure left permanent weakness of the "
       "hand confirmed by the neurology consult"},
      {"Medication/Fluid",
       "immunosuppressant ordered at the wrong dose caused irreversible "
       "kidney injury patient now requires ongoing dialysis"},
      {"Diagnosis/Treatment",
       "missed compartment syndrome resulted in permanent loss of function "
       "despite a late fasciotomy"},
  };
  banks["H"] = {
      {"Airway Management",
       "respiratory arrest after a sedation error required emergent "
       "intubation and transfer to the intensive care unit"},
      {"Medication/Fluid",
       "anticonvulsant omitted for two days patient had a prolonged "
       "seizure requiring intubation to sustain life"},
      {"Transfusion",
       "hemolytic transfusion reaction caused shock requiring vasopressors "
       "and emergent intervention to sustain life"},
      {"Complication of P/T/T",
       "cardiac arrest during dialysis required defibrillation and "
       "resuscitation patient transferred to intensive care"},
  };
  banks["I"] = {
      {"Medication/Fluid",
       "beta blocker was not reordered post operatively patient suffered a "
       "fatal arrhythmia resuscitation was unsuccessful and the patient "
       "expired"},
      {"Diagnosis/Treatment",
       "sepsis recognition was delayed despite abnormal vitals patient "
       "died after transfer to intensive care"},
      {"Fall",
       "unwitnessed fall with head strike caused an intracranial "
       "hemorrhage the patient expired no staff were present at the time"},
      {"Airway Management",
       "unplanned extubation overnight led to anoxic injury and death "
       "despite immediate resuscitation efforts"},
  };
  return banks;
}

inline std::vector<std::string> clinical_fillers() {
  return {
      "nurse notified the charge nurse and documented the event in the chart",
      "physician made aware and new orders were received",
      "event occurred during the night shift on the medical surgical unit",
      "family was updated at the bedside by the care team",
      "safety huddle was held to review the event with staff",
      "the patient is an elderly adult admitted earlier this week",
      "report was entered into the incident system per policy",
      "environment was checked and call light placed within reach",
      "charge nurse completed a follow up assessment later in the shift",
      "education was provided to staff regarding the standard procedure",
      "the unit was at full census with a float nurse assigned",
      "risk management was contacted for further review of the case",
  };
}

inline std::vector<std::string> clinical_noise() {
  return {"the",      "a",         "was",      "and",     "to",      "of",
          "on",       "in",        "at",       "with",    "for",     "per",
          "unit",     "room",      "shift",    "day",     "chart",   "staff",
          "nurse",    "md",        "rn",       "team",    "order",   "orders",
          "time",     "noted",     "stated",   "found",   "seen",    "called",
          "review",   "reviewed",  "status",   "stable",  "alert",   "oriented",
          "baseline", "assessed",  "plan",     "care",    "bed",     "floor",
          "left",     "right",     "this",     "that",    "again",   "during",
          "before",   "after",     "later",    "earlier", "today",   "tonight",
          "am",       "pm",        "approx",   "about",   "also",    "then",
          "upon",     "via",       "given",    "taken",   "placed",  "completed",
          "documented", "notified", "aware",   "present", "observed", "continues"};
}

}  // namespace detail

// Table-2-like skew for the first dataset: harm codes total 13.9%.
inline SyntheticSpec ds1_like_profile() {
  SyntheticSpec s;
  s.banks = detail::clinical_banks();
  s.priors = {{"A", 0.393}, {"B1", 0.069}, {"B2", 0.069}, {"C", 0.199},
              {"D", 0.131}, {"E", 0.060},  {"F", 0.035},  {"G", 0.022},
              {"H", 0.014}, {"I", 0.008}};
  s.noise_rate = 0.12;
  s.noise_lexicon = detail::clinical_noise();
  s.filler_sentences = detail::clinical_fillers();
  s.min_filler = 0;
  s.max_filler = 2;
  return s;
}

// Table-2-like skew for the second dataset: harm codes total 3.4%.
inline SyntheticSpec ds2_like_profile() {
  SyntheticSpec s = ds1_like_profile();
  s.priors = {{"A", 0.117}, {"B1", 0.0645}, {"B2", 0.0645}, {"C", 0.404},
              {"D", 0.316}, {"E", 0.015},   {"F", 0.009},   {"G", 0.005},
              {"H", 0.003}, {"I", 0.002}};
  return s;
}

// Noise-free corpus with disjoint class vocabularies: every model that can
// count words separates it, which makes it the overfit / sanity anchor.
inline SyntheticSpec separable_profile() {
  SyntheticSpec s;
  s.banks["A"] = {{"Safety/Security", "storage shelf layout confusing audit"},
                  {"Safety/Security", "signage unclear hallway congestion audit"}};
  s.banks["B1"] = {{"Medication/Fluid", "label discrepancy caught pharmacist early"},
                   {"Medication/Fluid", "draft order intercepted pharmacist verification"}};
  s.banks["B2"] = {{"Lab/Specimen", "duplicate checking safeguard intercepted mismatch"},
                   {"Lab/Specimen", "barcode safeguard rejected mismatch quickly"}};
  s.banks["C"] = {{"Medication/Fluid", "late vitamin supplement uneventful routine"},
                  {"Medication/Fluid", "delayed supplement administration uneventful routine"}};
  s.banks["D"] = {{"Lines/Tubes/Drain", "pump rate slip corrected observation continued"},
                  {"Lines/Tubes/Drain", "rate drift corrected telemetry observation"}};
  s.banks["E"] = {{"Fall", "tumble bruise hip analgesia needed"},
                  {"Fall", "slip laceration forearm sutures needed"}};
  s.banks["F"] = {{"Medication/Fluid", "overdose bleeding readmission lengthy recovery"},
                  {"Medication/Fluid", "dosing mishap hemorrhage extended stay"}};
  s.banks["G"] = {{"Surgery/Procedure", "nerve damage lasting weakness limb"},
                  {"Surgery/Procedure", "tissue necrosis permanent impairment limb"}};
  s.banks["H"] = {{"Airway Management", "arrest intubation icu rescue lifesaving"},
                  {"Airway Management", "collapse ventilator icu lifesaving measures"}};
  s.banks["I"] = {{"Diagnosis/Treatment", "deterioration fatal outcome resuscitation futile"},
                  {"Diagnosis/Treatment", "decline expired resuscitation unsuccessful fatal"}};
  for (const auto& code : severity_codes())
    s.priors.emplace_back(code, 0.1);
  s.noise_rate = 0.0;
  s.min_filler = 0;
  s.max_filler = 0;
  return s;
}

inline SyntheticSpec profile_by_name(const std::string& name) {
  if (name == "ds1_like") return ds1_like_profile();
  if (name == "ds2_like") return ds2_like_profile();
  if (name == "separable") return separable_profile();
  throw ConfigError("synthetic: unknown profile '" + name +
                    "' (expected ds1_like, ds2_like, or separable)");
}

}  // namespace harmnet
