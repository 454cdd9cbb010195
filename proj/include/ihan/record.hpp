#pragma once

#include <compare>
#include <string>
#include <string_view>
#include <vector>

#include "ihan/vocab.hpp"

namespace ihan {

// Calendar date stored as days since 1970-01-01.
struct Date {
    int days = 0;

    static Date parse(std::string_view iso); // strict YYYY-MM-DD, throws ParseError
    static Date from_ymd(int year, int month, int day);
    std::string to_string() const;

    Date plus_days(int n) const { return Date{days + n}; }
    auto operator<=>(const Date&) const = default;
};

struct CodedEvent {
    CodeType type;
    std::string code;
    std::string description; // optional pass-through, may be empty

    bool operator==(const CodedEvent&) const = default;
};

// All medical events for one patient on a single date of service.
struct Encounter {
    Date date;
    std::vector<CodedEvent> codes;

    bool operator==(const Encounter&) const = default;
};

// Date-ascending encounter sequence with a binary label. Encounters have
// distinct dates; same-date events belong to one encounter.
struct PatientRecord {
    std::string patient_id;
    int label = 0;
    std::vector<Encounter> encounters;

    bool has_code_of(CodeType t) const;
    bool operator==(const PatientRecord&) const = default;
};

} // namespace ihan
