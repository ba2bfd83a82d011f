// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 only when
// every criterion passes. Each check compares the engine with an independent
// brute-force oracle from support/oracles.hpp or with hand-built expectations.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "com/cli/csv.hpp"
#include "com/cli/script.hpp"
#include "com/com.hpp"
#include "support/oracles.hpp"

using namespace com;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and limits.
constexpr double kFloatRelTol = 1e-9;
constexpr double kPipelineSeconds = 1.0;
constexpr int kLinkCases = 200;
constexpr std::size_t kLinkMaxRows = 500;
constexpr int kLawCases = 1000;
constexpr int kProductCases = 100;
constexpr int kExtensionCases = 100;
constexpr int kFuzzSequences = 10000;
constexpr int kDualityRounds = 50;

struct Outcome {
    bool pass = true;
    std::string detail;
};

class Check {
public:
    void expect(bool cond, const std::string& what) {
        if (!cond && out_.pass) {
            out_.pass = false;
            out_.detail = what;
        }
    }
    [[nodiscard]] auto ok() const -> bool { return out_.pass; }
    [[nodiscard]] auto outcome() const -> Outcome { return out_; }
    void note(std::string s) {
        if (out_.pass) {
            out_.detail = std::move(s);
        }
    }

private:
    Outcome out_;
};

auto tup(std::vector<Member> m) -> Value { return make_tuple(Value{}, std::move(m)); }

auto scratch_dir(const std::string& tag) -> fs::path {
    auto dir = fs::temp_directory_path() / ("com_acceptance_" + tag + "_" + std::to_string(std::random_device{}()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

auto code_of(const std::function<void()>& f) -> std::optional<Errc> {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return std::nullopt;
}

auto rows_of(const std::vector<Ordinal>& v) -> std::vector<oracle::Row> { return {v.begin(), v.end()}; }

auto is_sorted_unique(const std::vector<Ordinal>& v) -> bool {
    return std::adjacent_find(v.begin(), v.end(), [](Ordinal a, Ordinal b) { return a >= b; }) == v.end();
}

// ---------------------------------------------------------------------------
// 1. Order totals pipeline

struct OrderData {
    std::vector<std::pair<std::string, std::int64_t>> orders;  // (supplier, number)
    struct Item {
        std::string supplier;
        std::int64_t number;
        std::int64_t cents;
        std::int64_t quantity;
    };
    std::vector<Item> items;
};

auto make_order_data(std::uint64_t seed, std::size_t n_orders, std::size_t n_items) -> OrderData {
    std::mt19937_64 rng(seed);
    OrderData d;
    for (std::size_t o = 0; o < n_orders; ++o) {
        d.orders.emplace_back("S" + std::to_string(o % 7), static_cast<std::int64_t>(o));
    }
    for (std::size_t i = 0; i < n_items; ++i) {
        const auto& o = d.orders[rng() % n_orders];
        d.items.push_back({o.first, o.second, static_cast<std::int64_t>(rng() % 100000),
                           static_cast<std::int64_t>(1 + rng() % 20)});
    }
    return d;
}

void write_order_files(const OrderData& d, const fs::path& dir) {
    std::string orders = "supp,no,customer\n";
    for (std::size_t o = 0; o < d.orders.size(); ++o) {
        orders += d.orders[o].first + "," + std::to_string(d.orders[o].second) + ",C" + std::to_string(o % 13) + "\n";
    }
    std::string items = "supplierId,orderNo,priceCents,price,quantity\n";
    for (const auto& it : d.items) {
        items += it.supplier + "," + std::to_string(it.number) + "," + std::to_string(it.cents) + "," +
                 std::to_string(it.cents / 100) + "." + (it.cents % 100 < 10 ? "0" : "") +
                 std::to_string(it.cents % 100) + "," + std::to_string(it.quantity) + "\n";
    }
    cli::write_file(dir / "Orders.csv", orders);
    cli::write_file(dir / "LineItems.csv", items);
}

const char* const kPipelineScript = R"(CONCEPT Orders
  IDENTITY
    String supp
    Integer no
  ENTITY
    String customer

CONCEPT LineItems
  ENTITY
    String supplierId
    Integer orderNo
    Integer priceCents
    Double price
    Integer quantity

LOAD Orders FROM "Orders.csv"
LOAD LineItems FROM "LineItems.csv"

COLUMN LineItems.amountCents : Integer = [priceCents] * [quantity]
COLUMN LineItems.amount : Double = [price] * [quantity]
COLUMN LineItems.order : Orders = TUPLE(supp=[supplierId], no=[orderNo])
COLUMN Orders.totalCents : Integer = ACCU([LineItems], [order], [amountCents], SUM)
COLUMN Orders.total : Double = ACCU([LineItems], [order], [amount], SUM)
EVALUATE

EXPORT Orders COLUMNS [supp], [no], [totalCents], [total] TO "totals.csv"
)";

auto criterion_pipeline() -> Outcome {
    Check c;
    const auto data = make_order_data(8, 100, 1000);
    const auto dir = scratch_dir("pipeline");
    write_order_files(data, dir);
    cli::write_file(dir / "pipeline.coscript", kPipelineScript);

    std::ostringstream out;
    std::ostringstream err;
    const auto start = std::chrono::steady_clock::now();
    const int code = cli::run_script(dir / "pipeline.coscript", {}, out, err);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    c.expect(code == 0, "script failed: " + err.str());
    if (!c.ok()) {
        return c.outcome();
    }

    std::vector<std::pair<std::pair<std::string, std::int64_t>, std::int64_t>> cents;
    std::vector<std::pair<std::pair<std::string, std::int64_t>, double>> reals;
    for (const auto& it : data.items) {
        cents.push_back({{it.supplier, it.number}, it.cents * it.quantity});
        reals.push_back({{it.supplier, it.number}, static_cast<double>(it.cents * it.quantity)});
    }
    const auto want_cents = oracle::group_sum(data.orders, cents);

    const auto rows = cli::parse_csv(cli::read_file(dir / "totals.csv"));
    c.expect(rows.size() == data.orders.size() + 1, "unexpected row count in totals.csv");
    for (std::size_t o = 0; c.ok() && o < data.orders.size(); ++o) {
        const auto& r = rows[o + 1];
        c.expect(r[0].text == data.orders[o].first && r[1].text == std::to_string(data.orders[o].second),
                 "order row " + std::to_string(o) + " out of place");
        c.expect(r[2].text == std::to_string(want_cents[o]),
                 "order " + std::to_string(o) + ": cents " + r[2].text + " != " + std::to_string(want_cents[o]));
        const double got = std::stod(r[3].text);
        const double want = static_cast<double>(want_cents[o]) / 100.0;
        const double rel = want == 0.0 ? std::fabs(got) : std::fabs(got - want) / std::fabs(want);
        c.expect(rel <= kFloatRelTol, "order " + std::to_string(o) + ": float total " + r[3].text + " vs " +
                                          std::to_string(want) + " (rel " + std::to_string(rel) + ")");
    }
    c.expect(seconds < kPipelineSeconds, "runtime " + std::to_string(seconds) + " s");
    c.note("100 orders, 1000 items, exact cents and float totals, " + std::to_string(seconds * 1000.0).substr(0, 6) +
           " ms");
    fs::remove_all(dir);
    return c.outcome();
}

// ---------------------------------------------------------------------------
// 2. Link columns versus equality joins

auto random_key_value(std::mt19937_64& rng, ConceptId type) -> Value {
    if (type == Schema::kInteger) {
        return Value::integer(static_cast<std::int64_t>(rng() % 4));
    }
    static const char* const words[] = {"a", "b", "c"};
    return Value::text(words[rng() % 3]);
}

auto criterion_links() -> Outcome {
    Check c;
    std::mt19937_64 rng(2);
    std::size_t pairs = 0;
    for (int round = 0; c.ok() && round < kLinkCases; ++round) {
        Store store;
        auto& s = store.schema();
        // identity fields as (name, type), base concept's first when there is one
        std::vector<std::pair<std::string, ConceptId>> key;
        const bool nested = rng() % 3 == 0;
        std::vector<DimensionSpec> base_dims;
        if (nested) {
            const auto n = 1 + rng() % 2;
            for (std::size_t k = 0; k < n; ++k) {
                const auto t = rng() % 2 ? Schema::kInteger : Schema::kString;
                base_dims.push_back({"b" + std::to_string(k), s.name_of(t), {}});
                key.emplace_back("b" + std::to_string(k), t);
            }
            s.define_concept("Base", "", base_dims, {});
        }
        std::vector<DimensionSpec> own;
        const auto n_own = 1 + rng() % (nested ? 2 : 3);
        for (std::size_t k = 0; k < n_own; ++k) {
            const auto t = rng() % 2 ? Schema::kInteger : Schema::kString;
            own.push_back({"t" + std::to_string(k), s.name_of(t), {}});
            key.emplace_back("t" + std::to_string(k), t);
        }
        const auto target = s.define_concept("Target", nested ? "Base" : "", own, {});
        std::vector<DimensionSpec> fact_dims;
        std::string formula = "TUPLE(";
        for (std::size_t k = 0; k < key.size(); ++k) {
            fact_dims.push_back({"f" + std::to_string(k), s.name_of(key[k].second), {}});
            formula += (k ? ", " : "") + key[k].first + "=[f" + std::to_string(k) + "]";
        }
        formula += ")";
        const auto fact = s.define_concept("Fact", "", {}, fact_dims);

        std::vector<std::vector<Value>> target_keys;
        const auto n_targets = rng() % 60;
        for (std::size_t i = 0; i < n_targets; ++i) {
            std::vector<Value> k;
            for (const auto& [name, type] : key) {
                k.push_back(random_key_value(rng, type));
            }
            if (std::find(target_keys.begin(), target_keys.end(), k) != target_keys.end()) {
                continue;
            }
            std::vector<Member> m;
            for (std::size_t j = 0; j < key.size(); ++j) {
                m.push_back({key[j].first, k[j]});
            }
            store.append_element(target, tup(m));
            target_keys.push_back(k);
        }
        std::vector<std::optional<std::vector<Value>>> probes;
        const auto n_facts = rng() % (kLinkMaxRows + 1);
        for (std::size_t i = 0; i < n_facts; ++i) {
            const auto o = store.append_element(fact, Value{});
            std::vector<Value> k;
            bool complete = true;
            for (std::size_t j = 0; j < key.size(); ++j) {
                Value v = rng() % 10 == 0 ? Value{} : random_key_value(rng, key[j].second);
                complete = complete && !v.is_empty();
                store.write_value(fact, o, "f" + std::to_string(j), v);
                k.push_back(v);
            }
            probes.push_back(complete ? std::optional(k) : std::nullopt);
        }

        const auto def = expr::make_definition("link", fact, target, expr::parse_expression(formula));
        expr::analyze({def}, s);
        const auto links = expr::eval_link(store, def);
        const auto want = oracle::equality_join(probes, target_keys);
        std::set<std::pair<long, long>> got_pairs;
        std::set<std::pair<long, long>> want_pairs;
        for (std::size_t i = 0; i < n_facts; ++i) {
            if (links.valid(i)) {
                got_pairs.emplace(static_cast<long>(i), links.ints()[i]);
            }
            if (want[i] >= 0) {
                want_pairs.emplace(static_cast<long>(i), want[i]);
            }
        }
        c.expect(got_pairs == want_pairs, "case " + std::to_string(round) + ": link pairs differ from join (" +
                                              std::to_string(got_pairs.size()) + " vs " +
                                              std::to_string(want_pairs.size()) + ")");
        pairs += want_pairs.size();
    }
    c.note(std::to_string(kLinkCases) + " cases, " + std::to_string(pairs) + " matched pairs");
    return c.outcome();
}

// ---------------------------------------------------------------------------
// 3. Project / deproject laws

auto criterion_laws() -> Outcome {
    Check c;
    std::mt19937_64 rng(3);
    for (int round = 0; c.ok() && round < kLawCases; ++round) {
        Store store;
        auto& s = store.schema();
        const auto cc = s.define_concept("C", "", {{"k", "Integer"}}, {});
        const auto b = s.define_concept("B", "", {{"k", "Integer"}}, {{"g", "C"}});
        const auto a = s.define_concept("A", "", {{"k", "Integer"}}, {{"f", "B"}});
        const std::size_t sizes[] = {1 + rng() % 30, 1 + rng() % 20, 1 + rng() % 10};
        const bool total = round % 2 == 0;
        const int gap = total ? 0 : 6;
        std::vector<oracle::Row> f(sizes[0]);
        std::vector<oracle::Row> g(sizes[1]);
        for (std::size_t i = 0; i < sizes[2]; ++i) {
            store.append_element(cc, tup({{"k", Value::integer(static_cast<std::int64_t>(i))}}));
        }
        for (std::size_t i = 0; i < sizes[1]; ++i) {
            store.append_element(b, tup({{"k", Value::integer(static_cast<std::int64_t>(i))}}));
            g[i] = gap && rng() % gap == 0 ? -1 : static_cast<oracle::Row>(rng() % sizes[2]);
            store.write_value(b, static_cast<Ordinal>(i), "g", g[i] < 0 ? Value{} : Value::integer(g[i]));
        }
        for (std::size_t i = 0; i < sizes[0]; ++i) {
            store.append_element(a, tup({{"k", Value::integer(static_cast<std::int64_t>(i))}}));
            f[i] = gap && rng() % gap == 0 ? -1 : static_cast<oracle::Row>(rng() % sizes[1]);
            store.write_value(a, static_cast<Ordinal>(i), "f", f[i] < 0 ? Value{} : Value::integer(f[i]));
        }
        const bool two_steps = rng() % 2;
        const DimensionPath path = two_steps ? DimensionPath{"f", "g"} : DimensionPath{"f"};
        const auto fn = two_steps ? oracle::compose(f, g) : f;
        const auto range = two_steps ? cc : b;
        const auto range_size = two_steps ? sizes[2] : sizes[1];

        ElementSelection e{a, {}};
        for (std::size_t i = 0; i < sizes[0]; ++i) {
            if (rng() % 3) {
                e.ordinals.push_back(static_cast<Ordinal>(i));
            }
        }
        ElementSelection sel{range, {}};
        for (std::size_t i = 0; i < range_size; ++i) {
            if (rng() % 2) {
                sel.ordinals.push_back(static_cast<Ordinal>(i));
            }
        }
        const auto label = "case " + std::to_string(round) + ": ";
        const auto img = std::get<ElementSelection>(project(store, e, path));
        c.expect(is_sorted_unique(img.ordinals), label + "projection not ascending and duplicate-free");
        c.expect(img.ordinals.size() <= e.ordinals.size(), label + "projection larger than its input");
        c.expect(rows_of(img.ordinals) == oracle::image(fn, rows_of(e.ordinals)), label + "projection != image");
        const auto pre = deproject(store, sel, a, path);
        c.expect(is_sorted_unique(pre.ordinals), label + "deprojection not ascending and duplicate-free");
        c.expect(rows_of(pre.ordinals) == oracle::preimage(fn, rows_of(sel.ordinals)),
                 label + "deprojection != union of inverse images");
        const auto back = std::get<ElementSelection>(project(store, pre, path));
        c.expect(std::includes(sel.ordinals.begin(), sel.ordinals.end(), back.ordinals.begin(), back.ordinals.end()),
                 label + "project(deproject(F)) not within F");
        // Empty outputs are dropped by projection, so the law covers the elements where the path is defined
        std::vector<Ordinal> defined;
        for (auto o : e.ordinals) {
            if (fn[static_cast<std::size_t>(o)] >= 0) {
                defined.push_back(o);
            }
        }
        c.expect(!total || defined == e.ordinals, label + "total function produced an empty output");
        const auto hull = deproject(store, img, a, path);
        c.expect(std::includes(hull.ordinals.begin(), hull.ordinals.end(), defined.begin(), defined.end()),
                 label + "E not within deproject(project(E))");
    }
    c.note(std::to_string(kLawCases) + " cases, total and partial functions, paths of one and two steps");
    return c.outcome();
}

// ---------------------------------------------------------------------------
// 4. Products

auto criterion_products() -> Outcome {
    Check c;
    std::mt19937_64 rng(4);
    for (int round = 0; c.ok() && round < kProductCases; ++round) {
        Store store;
        auto& s = store.schema();
        const auto n_sources = 1 + rng() % 3;
        std::vector<std::pair<std::string, ConceptId>> sources;
        std::vector<std::size_t> sizes;
        std::vector<std::vector<std::int64_t>> weight;
        std::size_t arity_sum = 0;
        for (std::size_t j = 0; j < n_sources; ++j) {
            const auto n_id = 1 + rng() % 3;
            arity_sum += n_id;
            std::vector<DimensionSpec> id;
            for (std::size_t k = 0; k < n_id; ++k) {
                id.push_back({"k" + std::to_string(k), "Integer", {}});
            }
            const auto src = s.define_concept("S" + std::to_string(j), "", id, {{"w", "Integer"}});
            sizes.push_back(rng() % 7);
            weight.emplace_back();
            for (std::size_t i = 0; i < sizes.back(); ++i) {
                std::vector<Member> m;
                for (std::size_t k = 0; k < n_id; ++k) {
                    m.push_back({"k" + std::to_string(k), Value::integer(static_cast<std::int64_t>(i * 10 + k))});
                }
                const auto o = store.append_element(src, tup(m));
                weight.back().push_back(static_cast<std::int64_t>(rng() % 10));
                store.write_value(src, o, "w", Value::integer(weight.back().back()));
            }
            sources.emplace_back("s" + std::to_string(j), src);
        }
        const auto threshold = static_cast<std::int64_t>(rng() % (10 * n_sources));
        std::string where_text;
        for (std::size_t j = 0; j < n_sources; ++j) {
            where_text += (j ? " + " : "") + std::string("[s") + std::to_string(j) + "].[w]";
        }
        where_text += " >= " + std::to_string(threshold);
        const auto label = "case " + std::to_string(round) + ": ";

        const auto all = product(store, "All", sources);
        c.expect(s.arity(all) == n_sources, label + "arity " + std::to_string(s.arity(all)) + " for " +
                                                std::to_string(n_sources) + " sources (identity arity sum " +
                                                std::to_string(arity_sum) + ")");
        std::size_t expected = 1;
        for (auto z : sizes) {
            expected *= z;
        }
        c.expect(store.extent_size(all) == expected, label + "unfiltered cardinality");

        const auto filtered = product(store, "Filtered", sources, expr::parse_expression(where_text));
        const auto want = oracle::nested_loop(sizes, [&](const std::vector<oracle::Row>& combo) {
            std::int64_t sum = 0;
            for (std::size_t j = 0; j < combo.size(); ++j) {
                sum += weight[j][static_cast<std::size_t>(combo[j])];
            }
            return sum >= threshold;
        });
        std::vector<std::vector<oracle::Row>> got;
        for (Ordinal o = 0; static_cast<std::size_t>(o) < store.extent_size(filtered); ++o) {
            std::vector<oracle::Row> combo;
            for (const auto& [dim, src] : sources) {
                combo.push_back(store.read_value(filtered, o, dim).as_integer());
            }
            got.push_back(combo);
        }
        c.expect(got == want, label + "filtered product differs from nested loop");
    }
    c.note(std::to_string(kProductCases) + " cases with one to three sources");
    return c.outcome();
}

// ---------------------------------------------------------------------------
// 5. Type constraint

auto criterion_type_constraint() -> Outcome {
    Check c;
    Store store;
    auto& s = store.schema();
    const auto country = s.define_concept("Country", "", {{"code", "String"}}, {});
    const auto city = s.define_concept("City", "Country", {{"cityName", "String"}}, {});
    const auto a = s.define_concept("A", "", {{"id", "Integer"}}, {{"location", "Country"}});
    const auto b = s.define_concept("B", "A", {{"sub", "Integer"}}, {{"location", "City"}});
    c.expect(s.validate().empty(), "override of Country by City reported as a violation");

    Schema broken = s;
    c.expect(code_of([&] { Schema t = s; t.reparent(city, Schema::kRoot); }) == Errc::type_constraint_violation,
             "enforced mutation was not refused");
    broken.reparent(city, Schema::kRoot, Checking::defer);
    const auto report = broken.validate();
    c.expect(report.size() == 1 && report[0].kind == ViolationKind::type_constraint && report[0].concept_name == "B" &&
                 report[0].dimension == "location",
             "expected exactly one type constraint violation on B.location, got " + std::to_string(report.size()));

    const auto de = store.append_element(country, tup({{"code", Value::text("DE")}}));
    store.append_element(country, tup({{"code", Value::text("FR")}}));
    const auto bonn = store.append_element(city, tup({{"code", Value::text("DE")}, {"cityName", Value::text("Bonn")}}));
    const auto lyon = store.append_element(city, tup({{"code", Value::text("FR")}, {"cityName", Value::text("Lyon")}}));
    const auto e = store.append_element(b, tup({{"id", Value::integer(1)}, {"sub", Value::integer(1)}}));
    store.write_value(a, store.ancestor_ordinal(b, e, a), "location", Value::integer(de));
    c.expect(!code_of([&] { store.write_value(b, e, "location", Value::integer(bonn)); }).has_value(),
             "conforming city write refused");
    c.expect(code_of([&] { store.write_value(b, e, "location", Value::integer(lyon)); }) ==
                 Errc::type_constraint_violation,
             "city outside the stored country accepted");
    c.expect(store.read_value(b, e, "location") == Value::integer(bonn), "refused write changed the cell");
    c.note("schema and data level checks");
    return c.outcome();
}

// ---------------------------------------------------------------------------
// 6. Function extension on two-level hierarchies

auto criterion_extension() -> Outcome {
    Check c;
    std::mt19937_64 rng(6);
    std::size_t reads = 0;
    for (int round = 0; c.ok() && round < kExtensionCases; ++round) {
        Store store;
        auto& s = store.schema();
        auto dims = [&](const std::string& prefix) {
            std::vector<DimensionSpec> out;
            const auto n = 1 + rng() % 2;
            for (std::size_t k = 0; k < n; ++k) {
                out.push_back({prefix + std::to_string(k), rng() % 2 ? "Integer" : "String", {}});
            }
            return out;
        };
        const auto base_dims = dims("c");
        const auto ext_dims = dims("x");
        const auto country = s.define_concept("Country", "", base_dims, {});
        const auto city = s.define_concept("City", "Country", ext_dims, {});
        const auto a = s.define_concept("A", "", {{"id", "Integer"}}, {{"location", "Country"}});
        const auto b = s.define_concept("B", "A", {{"sub", "Integer"}}, {{"location", "City"}});

        auto segment = [&](const std::vector<DimensionSpec>& spec, std::size_t i) {
            std::vector<Member> m;
            for (const auto& d : spec) {
                m.push_back({d.name, d.range == "Integer" ? Value::integer(static_cast<std::int64_t>(i))
                                                          : Value::text("v" + std::to_string(i))});
            }
            return tup(m);
        };
        const auto n_countries = 1 + rng() % 5;
        std::vector<Value> country_seg;
        for (std::size_t i = 0; i < n_countries; ++i) {
            country_seg.push_back(segment(base_dims, i));
            store.append_element(country, country_seg.back());
        }
        std::vector<Value> city_seg;
        std::vector<std::size_t> city_country;
        std::map<std::size_t, std::vector<std::size_t>> cities_in;
        const auto n_cities = rng() % 12;
        for (std::size_t i = 0; i < n_cities; ++i) {
            const auto k = rng() % n_countries;
            city_seg.push_back(segment(ext_dims, i));
            city_country.push_back(k);
            cities_in[k].push_back(i);
            store.append_element(city, concat_extension(country_seg[k], city_seg.back()));
        }
        const auto n_b = 1 + rng() % 10;
        for (std::size_t i = 0; c.ok() && i < n_b; ++i) {
            const auto e = store.append_element(
                b, tup({{"id", Value::integer(static_cast<std::int64_t>(i % 3))},
                        {"sub", Value::integer(static_cast<std::int64_t>(i))}}));
            const auto sup = store.ancestor_ordinal(b, e, a);
            const auto label = "case " + std::to_string(round) + ", element " + std::to_string(i) + ": ";
            if (!store.read_value(a, sup, "location").is_empty()) {
                continue;  // shared super-element already placed
            }
            const auto k = rng() % n_countries;
            store.write_value(a, sup, "location", Value::integer(static_cast<std::int64_t>(k)));
            std::optional<std::size_t> own;
            if (!cities_in[k].empty() && rng() % 4) {
                own = cities_in[k][rng() % cities_in[k].size()];
                store.write_value(b, e, "location", Value::integer(static_cast<std::int64_t>(*own)));
            }
            const auto read = store.read_typed(b, e, "location");
            const auto super_read = store.read_typed(a, sup, "location");
            const auto full = store.identity_of(read.type, read.value.as_integer());
            const auto base = store.identity_of(super_read.type, super_read.value.as_integer());
            const auto segs = decompose_segments(full);
            ++reads;
            if (!own) {
                c.expect(read.type == country && segs.size() == 1 && segs[0] == country_seg[k],
                         label + "unextended read should be the base segment only");
                continue;
            }
            c.expect(read.type == city, label + "read is not a City");
            c.expect(segs.size() == 2, label + "expected two segments");
            if (!c.ok()) {
                break;
            }
            c.expect(segs[0] == base && base == country_seg[city_country[*own]],
                     label + "base segment differs from the super-element's read");
            c.expect(segs[1] == city_seg[*own], label + "extension segment differs from the own segment");
            c.expect(concat_extension(base, city_seg[*own]) == full, label + "concatenation differs from the read");
        }
    }
    c.note(std::to_string(kExtensionCases) + " hierarchies, " + std::to_string(reads) + " reads");
    return c.outcome();
}

// ---------------------------------------------------------------------------
// 7. Schema fuzzing

auto criterion_fuzz() -> Outcome {
    Check c;
    std::mt19937_64 rng(7);
    std::size_t injected = 0;
    std::size_t accepted = 0;
    for (int seq = 0; c.ok() && seq < kFuzzSequences; ++seq) {
        Schema s;
        // oracle graph over user concepts: index = id - first user id
        const auto first = static_cast<std::uint32_t>(s.size());
        std::vector<std::vector<std::size_t>> adj;
        std::vector<std::optional<std::size_t>> super_of;
        int dim_counter = 0;
        auto rebuild = [&](std::vector<std::vector<std::size_t>> g) {
            return oracle::has_cycle(g);
        };
        auto pick_range = [&](std::size_t self, bool allow_self) -> std::pair<std::string, std::optional<std::size_t>> {
            const auto n_user = adj.size() + (allow_self ? 1 : 0);
            const auto r = rng() % (n_user + 2);
            if (r >= n_user) {
                return {r == n_user ? "Integer" : "String", std::nullopt};
            }
            if (r == self) {
                return {"C" + std::to_string(self), r};
            }
            return {s.name_of(ConceptId{static_cast<std::uint32_t>(first + r)}), r};
        };
        const auto ops = 2 + rng() % 10;
        for (std::size_t op = 0; c.ok() && op < ops; ++op) {
            const auto kind = rng() % 20;
            auto graph = adj;
            std::optional<Errc> got;
            const auto label = "sequence " + std::to_string(seq) + ", step " + std::to_string(op) + ": ";
            if (kind < 12 || adj.empty()) {
                const auto self = adj.size();
                const auto name = "C" + std::to_string(self);
                std::string super_name;
                std::optional<std::size_t> super;
                const auto sr = rng() % (adj.size() + 3);
                if (sr < adj.size()) {
                    super = sr;
                    super_name = s.name_of(ConceptId{static_cast<std::uint32_t>(first + sr)});
                } else if (sr == adj.size() && rng() % 4 == 0) {
                    super = self;
                    super_name = name;
                }
                graph.emplace_back();
                if (super) {
                    graph[self].push_back(*super);
                }
                std::vector<DimensionSpec> id;
                std::vector<DimensionSpec> ent;
                const auto n_dims = rng() % 4;
                for (std::size_t d = 0; d < n_dims; ++d) {
                    auto [range, target] = pick_range(self, rng() % 6 == 0);
                    if (target) {
                        graph[self].push_back(*target);
                    }
                    (rng() % 2 ? id : ent).push_back({"d" + std::to_string(dim_counter++), range, {}});
                }
                got = code_of([&] { s.define_concept(name, super_name, id, ent); });
                if (!got) {
                    super_of.push_back(super);
                }
            } else if (kind < 17) {
                const auto at = rng() % adj.size();
                auto [range, target] = pick_range(at, false);
                if (target) {
                    graph[at].push_back(*target);
                }
                got = code_of([&] {
                    s.add_dimension(ConceptId{static_cast<std::uint32_t>(first + at)},
                                    rng() % 2 ? DimensionKind::identity : DimensionKind::entity,
                                    {"d" + std::to_string(dim_counter++), range, {}});
                });
            } else {
                const auto at = rng() % adj.size();
                const auto to = rng() % (adj.size() + 1);
                auto& edges = graph[at];
                if (super_of[at]) {
                    edges.erase(std::find(edges.begin(), edges.end(), *super_of[at]));
                }
                if (to < adj.size()) {
                    edges.push_back(to);
                }
                got = code_of([&] {
                    s.reparent(ConceptId{static_cast<std::uint32_t>(first + at)},
                               to < adj.size() ? ConceptId{static_cast<std::uint32_t>(first + to)} : Schema::kRoot);
                });
                if (!got) {
                    super_of[at] = to < adj.size() ? std::optional(to) : std::nullopt;
                }
            }
            const bool cyclic = rebuild(graph);
            if (cyclic) {
                ++injected;
                c.expect(got == Errc::cycle_introduced, label + "injected cycle not rejected");
            } else {
                c.expect(!got.has_value(), label + "acyclic mutation rejected");
                if (!got) {
                    adj = std::move(graph);
                    ++accepted;
                }
            }
            const auto report = s.validate();
            for (const auto& v : report) {
                c.expect(v.kind != ViolationKind::cycle && v.kind != ViolationKind::broken_inclusion,
                         label + "schema holds a cycle after successful definitions: " + v.message);
            }
            for (std::size_t i = 0; i < adj.size(); ++i) {
                const auto id = ConceptId{static_cast<std::uint32_t>(first + i)};
                c.expect(!s.greater_set(id).contains(id), label + "a concept is greater than itself");
            }
        }
    }
    c.note(std::to_string(kFuzzSequences) + " sequences, " + std::to_string(accepted) + " accepted mutations, " +
           std::to_string(injected) + " injected cycles rejected");
    return c.outcome();
}

// ---------------------------------------------------------------------------
// 8. Common greater versus common lesser

auto criterion_duality() -> Outcome {
    Check c;
    std::mt19937_64 rng(8);
    for (int round = 0; c.ok() && round < kDualityRounds; ++round) {
        Store store;
        auto& s = store.schema();
        const auto address = s.define_concept("Address", "", {{"street", "String"}, {"no", "Integer"}}, {});
        const auto person = s.define_concept("Person", "", {{"name", "String"}}, {{"address", "Address"}});
        const auto company = s.define_concept("Company", "", {{"title", "String"}}, {{"address", "Address"}});
        const auto contract = s.define_concept("Contract", "", {{"person", "Person"}, {"company", "Company"}}, {});
        if (round == 0) {
            c.expect(s.common_neighbors(person, company, Direction::lesser) == std::vector<ConceptId>{contract},
                     "Contract is not the common lesser concept");
            const auto g = s.common_neighbors(person, company, Direction::greater);
            c.expect(std::find(g.begin(), g.end(), address) != g.end(), "Address is not a common greater concept");
        }
        const auto n_addr = 1 + rng() % 100;
        const auto n_person = rng() % 300;
        const auto n_company = rng() % 200;
        for (std::size_t i = 0; i < n_addr; ++i) {
            store.append_element(address, tup({{"street", Value::text("st" + std::to_string(i % 17))},
                                               {"no", Value::integer(static_cast<std::int64_t>(i))}}));
        }
        std::vector<oracle::Row> person_addr(n_person);
        std::vector<oracle::Row> company_addr(n_company);
        for (std::size_t i = 0; i < n_person; ++i) {
            store.append_element(person, tup({{"name", Value::text("p" + std::to_string(i))}}));
            person_addr[i] = rng() % 8 == 0 ? -1 : static_cast<oracle::Row>(rng() % n_addr);
            store.write_value(person, static_cast<Ordinal>(i), "address",
                              person_addr[i] < 0 ? Value{} : Value::integer(person_addr[i]));
        }
        for (std::size_t i = 0; i < n_company; ++i) {
            store.append_element(company, tup({{"title", Value::text("c" + std::to_string(i))}}));
            company_addr[i] = rng() % 8 == 0 ? -1 : static_cast<oracle::Row>(rng() % n_addr);
            store.write_value(company, static_cast<Ordinal>(i), "address",
                              company_addr[i] < 0 ? Value{} : Value::integer(company_addr[i]));
        }
        std::set<std::pair<oracle::Row, oracle::Row>> contracts;
        const auto n_contract = (n_person && n_company) ? rng() % 300 : 0;
        for (std::size_t i = 0; i < n_contract; ++i) {
            const auto p = static_cast<oracle::Row>(rng() % n_person);
            const auto k = static_cast<oracle::Row>(rng() % n_company);
            if (contracts.emplace(p, k).second) {
                store.append_element(contract, tup({{"person", Value::integer(p)}, {"company", Value::integer(k)}}));
            }
        }
        ElementSelection people{person, {}};
        for (std::size_t i = 0; i < n_person; ++i) {
            if (round % 2 == 0 || rng() % 3 == 0) {
                people.ordinals.push_back(static_cast<Ordinal>(i));
            }
        }

        // join oracle: companies whose address equals the address of a chosen person
        std::vector<oracle::Row> want_join;
        for (std::size_t k = 0; k < n_company; ++k) {
            for (auto p : people.ordinals) {
                const auto pa = person_addr[static_cast<std::size_t>(p)];
                if (pa >= 0 && pa == company_addr[k]) {
                    want_join.push_back(static_cast<oracle::Row>(k));
                    break;
                }
            }
        }
        // relationship oracle: companies reached through a contract of a chosen person
        std::set<oracle::Row> related;
        for (const auto& [p, k] : contracts) {
            if (std::binary_search(people.ordinals.begin(), people.ordinals.end(), static_cast<Ordinal>(p))) {
                related.insert(k);
            }
        }
        const std::vector<oracle::Row> want_rel(related.begin(), related.end());

        auto run = [&](std::string_view text) {
            const auto q = parse_query(s, text);
            return std::get<ElementSelection>(run_query(store, QueryPlan{people, q.steps}));
        };
        const auto joined = run("(Person) -> [address] -> (Address) <- [address] <- (Company)");
        const auto rel = run("(Person) <- [person] <- (Contract) -> [company] -> (Company)");
        const auto label = "round " + std::to_string(round) + ": ";
        c.expect(joined.concept_id == company && rows_of(joined.ordinals) == want_join,
                 label + "common greater result differs from the join oracle");
        c.expect(rel.concept_id == company && rows_of(rel.ordinals) == want_rel,
                 label + "common lesser result differs from the relationship oracle");
    }
    c.note(std::to_string(kDualityRounds) + " randomized instances");
    return c.outcome();
}

// ---------------------------------------------------------------------------
// 9. Determinism

auto criterion_determinism() -> Outcome {
    Check c;
    const auto data = make_order_data(9, 300, 5000);
    const auto dir = scratch_dir("determinism");
    write_order_files(data, dir);
    std::string script = kPipelineScript;
    script += R"(COLUMN Orders.n : Integer = ACCU([LineItems], [order], 1, COUNT)
COLUMN Orders.mean : Double = ACCU([LineItems], [order], [amount], AVG)
COLUMN Orders.top : Double = ACCU([LineItems], [order], [price], MAX)
COLUMN LineItems.share : Double = [amount] / [order].[total]
EVALUATE
SUBSET Big OF Orders WHERE [total] > 20000.0
PRODUCT Pairs = (Big x, Big y | [x].[total] < [y].[total] && [y].[n] < 14)
QUERY (Orders | [total] > 20000.0) <- [order] <- (LineItems | [quantity] > 10) AS bulky
EXPORT Orders COLUMNS [supp], [no], [n], [mean], [top], [total] TO "orders.csv"
EXPORT LineItems COLUMNS [order].[supp], [order].[no], [amount], [share] TO "items.csv"
EXPORT Pairs COLUMNS [x].[no], [y].[no] TO "pairs.csv"
EXPORT bulky COLUMNS [orderNo], [quantity] TO "bulky.csv"
)";
    cli::write_file(dir / "full.coscript", script);
    const char* const files[] = {"totals.csv", "orders.csv", "items.csv", "pairs.csv", "bulky.csv"};
    std::vector<std::pair<std::string, std::vector<std::string>>> runs;
    const unsigned threads[] = {1, 1, 4, 4};
    for (std::size_t r = 0; r < 4; ++r) {
        cli::ScriptOptions opts;
        opts.threads = threads[r];
        opts.output_dir = dir / ("run" + std::to_string(r));
        std::ostringstream out;
        std::ostringstream err;
        const int code = cli::run_script(dir / "full.coscript", opts, out, err);
        c.expect(code == 0, "run " + std::to_string(r) + " failed: " + err.str());
        if (!c.ok()) {
            return c.outcome();
        }
        std::vector<std::string> contents;
        for (const auto* f : files) {
            contents.push_back(cli::read_file(*opts.output_dir / f));
        }
        runs.emplace_back(out.str(), std::move(contents));
    }
    for (std::size_t r = 1; r < runs.size(); ++r) {
        c.expect(runs[r].first == runs[0].first, "summary output of run " + std::to_string(r) + " differs");
        for (std::size_t f = 0; f < std::size(files); ++f) {
            c.expect(runs[r].second[f] == runs[0].second[f],
                     std::string(files[f]) + " of run " + std::to_string(r) + " differs");
        }
    }
    std::size_t bytes = 0;
    for (const auto& s : runs[0].second) {
        bytes += s.size();
    }
    c.note("4 runs (threads 1,1,4,4), 5 exports, " + std::to_string(bytes) + " bytes each");
    fs::remove_all(dir);
    return c.outcome();
}

}  // namespace

auto main() -> int {
    struct Criterion {
        const char* name;
        Outcome (*run)();
    };
    const Criterion criteria[] = {
        {"order totals pipeline matches group-by oracle", criterion_pipeline},
        {"link columns equal equality joins", criterion_links},
        {"project and deproject laws", criterion_laws},
        {"product arity and cardinality", criterion_products},
        {"type constraint enforcement", criterion_type_constraint},
        {"function extension segments", criterion_extension},
        {"schema fuzzing keeps the poset acyclic", criterion_fuzz},
        {"common greater and common lesser duality", criterion_duality},
        {"byte-identical exports across runs and threads", criterion_determinism},
    };
    int failed = 0;
    int index = 0;
    for (const auto& cr : criteria) {
        ++index;
        Outcome o;
        try {
            o = cr.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << index << ". " << cr.name << " - " << o.detail << "\n";
        failed += o.pass ? 0 : 1;
    }
    std::cout << (9 - failed) << "/9 criteria passed\n";
    return failed == 0 ? 0 : 1;
}
