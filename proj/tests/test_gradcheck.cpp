#include "valor/gradcheck.hpp"

#include <doctest.h>

using namespace valor::gradcheck;

TEST_CASE("relative error uses an absolute floor")
{
    CHECK(relative_error(1.0, 1.0) == 0.0);
    CHECK(relative_error(2.0, 1.0) == doctest::Approx(0.5));
    CHECK(relative_error(1e-9, -1e-9) == doctest::Approx(2e-9 / kRelFloor));
}

TEST_CASE("the quadratic reference op is nearly exact")
{
    const auto r = grad_check("quadratic");
    CHECK(r.passed);
    CHECK(r.max_rel_error < 1e-8);
    CHECK(r.probes.size() == 20u);
}

TEST_CASE("every registered op passes at the default tolerance")
{
    CHECK(op_names().size() == 10u);
    for (const auto& op : op_names()) {
        CAPTURE(op);
        const auto r = grad_check(op, 20, 1e-4, 42);
        CHECK(r.passed);
        CHECK(r.max_rel_error < 1e-4);
        CHECK(r.op == op);
        const auto j = to_json(r);
        CHECK(j.at("probe_count").get<std::size_t>() == r.probes.size());
    }
}

TEST_CASE("reports are deterministic, seeds differ, unknown ops throw")
{
    const auto a = grad_check("sas", 10, 1e-4, 3);
    const auto b = grad_check("sas", 10, 1e-4, 3);
    CHECK(to_json(a).dump() == to_json(b).dump());
    CHECK_FALSE(grad_check("sas", 10, 1e-30, 3).passed);
    CHECK(to_json(grad_check("sas", 10, 1e-4, 4)).dump() != to_json(a).dump());
    CHECK_THROWS_AS(grad_check("softmaxx"), std::invalid_argument);
}
