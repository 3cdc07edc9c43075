#pragma once

#include <memory>
#include <string>
#include <vector>

#include "diagnosys/consultation.hpp"

#ifndef DIAGNOSYS_TEST_KB_DIR
#error "DIAGNOSYS_TEST_KB_DIR must point at the bundled knowledge base"
#endif

namespace testkit {

using namespace diagnosys;

inline const std::string kKbDir = DIAGNOSYS_TEST_KB_DIR;

/// The bundled KB, loaded once per process.
inline std::shared_ptr<const DiagnosticContext> bundled() {
  static const auto ctx = std::make_shared<const DiagnosticContext>(load_knowledge_base(kKbDir));
  return ctx;
}

inline SymptomEntry sym(std::string canonical, double w, std::vector<std::string> synonyms = {}) {
  Severity tier = w < 0.45 ? Severity::mild : w < 0.75 ? Severity::moderate : Severity::severe;
  return {std::move(canonical), std::move(synonyms), w, tier};
}

inline TestCriterion test(std::string id, Comparator cmp, double threshold, bool decisive) {
  return {id, id + " display", threshold, "u", cmp, decisive, "note"};
}

/// Three small diseases with hand-checkable overlaps.
///   Alpha: fever .9, cough .6, rash .3        tests: ta > 10 decisive, shared < 5 supportive
///   Beta:  fever .5, headache .8, nausea .4   tests: tb >= 1 supportive, shared < 5 decisive
///   Gamma: cough .7, wheeze .9, rash .5       tests: tg < 2 decisive
inline KnowledgeBase toy_kb() {
  DiseaseRecord a{"Alpha", Category::infectious,
                  {sym("fever", 0.9, {"high temperature"}), sym("cough", 0.6), sym("rash", 0.3, {"skin rash"})},
                  {{"travel", 0.4}, {"contact", 0.2}},
                  {test("ta", Comparator::greater, 10, true), test("shared", Comparator::less, 5, false)},
                  "Rest.\nspecialist: Alpha doctor"};
  DiseaseRecord b{"Beta", Category::chronic,
                  {sym("fever", 0.5), sym("headache", 0.8), sym("nausea", 0.4, {"feeling sick"})},
                  {{"stress", 0.3}},
                  {test("tb", Comparator::greater_equal, 1, false), test("shared", Comparator::less, 5, true)},
                  "Sleep.\nspecialist: Beta doctor"};
  DiseaseRecord g{"Gamma", Category::other_common,
                  {sym("cough", 0.7), sym("wheeze", 0.9), sym("rash", 0.5)},
                  {{"smoking", 0.5}},
                  {test("tg", Comparator::less, 2, true)},
                  "Inhaler.\nspecialist: Gamma doctor"};
  return KnowledgeBase({a, b, g});
}

inline std::shared_ptr<const DiagnosticContext> toy() {
  static const auto ctx = std::make_shared<const DiagnosticContext>(toy_kb());
  return ctx;
}

}  // namespace testkit
