// Library walk-through without a config file: generate a tilt disturbance with one
// vibration, design an order-5 stage-2 controller on its spectrum, then run the
// cascade standalone and dCAO against a plain integrator.
//
//   design_and_simulate [seed]

#include <cstdlib>
#include <iomanip>
#include <iostream>

#include <aoctl/aoctl.hpp>

using namespace aoctl;

int main(int argc, char** argv) {
    const std::uint64_t seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 1;
    const double f1 = 500.0, f2 = 1500.0;

    DisturbanceModel dm;
    dm.atmosphere = {1.0, 5.0, -17.0 / 3.0, f2};
    dm.peaks = {{120.0, 40.0, 1e5}};
    dm.psd_points = 8193;
    dm.fir_length = 8192;
    const std::vector<double> phi = generate_timeseries(dm.fit(), static_cast<std::size_t>(6.0 * f2), seed);

    // Stage 2 sees roughly the stage-1 residual; an integrator at 0.3 gives the design spectrum.
    const LoopTiming t2{1.0 / f2, 1.0 / f2, WfsModel::unit_delay};
    FrequencyGrid grid = merge_grid(make_grid(f2, 300, Spacing::log, 0.5), std::vector<double>{96.0, 120.0});
    SynthesisProblem p;
    p.timing = t2;
    p.plant = plant_response(t2, grid);
    const std::vector<double> psd = dm.psd_at(grid.hz());
    const LoopTiming t1{1.0 / f1, 1.0 / f1, WfsModel::unit_delay};
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double w = grid.omega(i);
        const double s1 = w < kTwoPi * f1 / 2.0
                              ? std::abs(1.0 / (1.0 + plant_value(t1, w) * integrator(0.3).response(w / f1)))
                              : 1.0;
        p.disturbance_amplitude.push_back(std::sqrt(psd[i]) * s1);
    }
    p.order = 5;
    const SynthesisResult r = synthesize_multistart(p, 0.1);
    if (r.status == SynthesisStatus::infeasible) {
        std::cerr << "synthesis infeasible: " << r.diagnostics << '\n';
        return 2;
    }
    std::cout << "stage-2 design: " << to_json(r, f2).dump() << "\n\n";

    CascadeConfig c;
    c.stage1.rate_hz = f1;
    c.stage1.timing = t1;
    c.stage1.controller = integrator(0.3);
    c.stage2.rate_hz = f2;
    c.stage2.timing = t2;
    const std::size_t skip = static_cast<std::size_t>(f2);  // first second discarded

    std::cout << std::left << std::setw(12) << "scheme" << std::setw(14) << "stage 2" << "residual RMS\n";
    for (Scheme scheme : {Scheme::standalone, Scheme::dcao}) {
        c.scheme = scheme;
        for (const auto& [name, k] : {std::pair{"integrator", integrator(0.3)}, std::pair{"order 5", r.controller}}) {
            c.stage2.controller = k;
            const SimTrace tr = run(c, {phi}, seed);
            const std::vector<double>& e2 = tr.modes[0].e2;
            std::cout << std::setw(12) << to_string(scheme) << std::setw(14) << name
                      << rms({e2.begin() + static_cast<std::ptrdiff_t>(skip), e2.end()}) << '\n';
        }
    }
    return 0;
}
