"""
The stage runner behind ``reskam run``.

Stages form a fixed graph::

    expand ─▶ reduce ─▶ birkhoff ─▶ adapt ─▶ kolmogorov
                 │          │         └────▶ calibrate ─▶ certify
                 └──────────┴──────────────────┴──▶ compare
    integrate
    figures, accept ◀─ everything above

Every stage writes a content-addressed artifact (see :mod:`reskam._store`); a stage whose key is already present is
not run again. The manifest in the output directory records, per stage, the key, the upstream keys, the caps and
the key scalars.
"""

from __future__ import annotations

import dataclasses
import io
import logging
import math
import shutil
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Any, Callable, Dict, Mapping, Optional, Tuple, Type, Union

import numpy as np

from . import _acceptance, pseries
from ._chain import TransformChain
from ._decorators import timeit
from ._json import JsonObject, JsonSerializer
from ._ledger import NormLedger
from ._libraries import DataFrameLibrary, PandasDataFrameLibrary
from ._store import Artifact, ArtifactStore, ArtifactWriter, stable_hash
from .adapt import AdaptedChart, adapted_chart, build_adapted_chart, circularization_gain, normalized_start
from .birkhoff import birkhoff_normalize, birkhoff_step
from .config import PipelineConfig
from .converge import certify, diophantine_gamma, explicit_stage, tail_bound_frame, tail_iterate, tail_seed
from .dynamics import (
    Reconstruction,
    Trajectory,
    compare,
    dominant_frequency,
    energy_drift,
    integrate_full,
    integrate_poly,
    libration,
    reconstruct,
    resonant_angles,
)
from .errors import StageError
from .hambuild import (
    DiagonalHamiltonian,
    PoincareChart,
    PoincareExpansion,
    ResonantChart,
    build_expansion,
    diagonalize,
    find_equilibrium,
    initial_condition,
    poincare_state,
    to_action_angle,
    to_resonant_average,
)
from .kolmogorov import KolmogorovState, frequency_map, kolmogorov_normalize, newton_calibrate
from .pseries import ActionSeries, FrequencyVector, Series, SqrtSeries

__all__ = ("Stage", "STAGES", "PipelineManifest", "PipelineOptions", "Pipeline", "run", "export", "FORMATS")

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
FORMATS = ("text", "csv", "manifest")
COMPARISONS = ("fig3", "fig7")


def _version() -> str:
    try:
        return metadata.version("reskam")
    except metadata.PackageNotFoundError:
        return "0"


def _expansion_caps(config: PipelineConfig) -> Dict[str, Any]:
    caps = dataclasses.asdict(config.expansion)
    return {key: caps[key] for key in ("secular_degree", "kepler_degree", "fourier", "grid", "method")}


def _sqrt_caps(config: PipelineConfig) -> Dict[str, Any]:
    return {"degree_cap": config.series.sqrt_degree}


def _action_caps(config: PipelineConfig) -> Dict[str, Any]:
    return {"action_cap": config.series.action_degree, "fourier_cap": config.series.kolmogorov_fourier}


@dataclass(frozen=True)
class Stage:
    """
    Args:
        name: The stage name.
        upstream: The stages whose artifacts this stage reads.
        sections: The configuration sections that enter its key.
        caps: The truncations its artifact is built with.
    """

    name: str
    upstream: Tuple[str, ...] = ()
    sections: Tuple[str, ...] = ()
    caps: Callable[[PipelineConfig], Dict[str, Any]] = lambda config: {}


STAGES: Dict[str, Stage] = {
    stage.name: stage
    for stage in (
        Stage("expand", (), ("system", "expansion"), _expansion_caps),
        Stage("reduce", ("expand",), ("system", "series"), lambda c: {**_expansion_caps(c), **_sqrt_caps(c)}),
        Stage("birkhoff", ("reduce",), ("birkhoff",), _sqrt_caps),
        Stage("adapt", ("reduce", "birkhoff"), ("adapt", "series"), lambda c: {**_sqrt_caps(c), **_action_caps(c)}),
        Stage("kolmogorov", ("adapt",), ("kolmogorov",), _action_caps),
        Stage("calibrate", ("reduce", "birkhoff", "adapt"), ("calibrate", "kolmogorov"), _action_caps),
        Stage("certify", ("calibrate",), ("converge",), _action_caps),
        Stage("integrate", (), ("system", "dynamics")),
        Stage("compare", ("reduce", "birkhoff", "calibrate"), ("dynamics",), _sqrt_caps),
        Stage("figures", ("integrate", "adapt", "kolmogorov", "certify", "compare")),
        Stage("accept", ("reduce", "adapt", "calibrate", "certify", "integrate", "compare")),
    )
}


@dataclass
class PipelineManifest:
    """
    The record of a pipeline run: the configuration hash and one entry per executed stage.
    """

    config_hash: str
    version: str
    stages: Dict[str, JsonObject] = field(default_factory=dict)

    def as_dict(self) -> JsonObject:
        return {"config_hash": self.config_hash, "version": self.version, "stages": self.stages}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> PipelineManifest:
        if "config_hash" not in data or "stages" not in data:
            raise ValueError("the manifest must carry config_hash and stages.")
        return cls(data["config_hash"], data.get("version", "0"), dict(data["stages"]))

    def write(self, path: Union[str, Path]):
        Path(path).write_bytes(JsonSerializer.create_fastest().serialize(self.as_dict()))

    @classmethod
    def read(cls, path: Union[str, Path]) -> PipelineManifest:
        with open(path) as f:
            return cls.from_dict(JsonSerializer.create_fastest().deserialize(f))

    def scalars(self) -> Dict[str, Dict[str, Any]]:
        return {name: entry.get("scalars", {}) for name, entry in self.stages.items()}

    def to_text(self) -> str:
        """
        Renders the manifest as ``key: value`` lines, one block per stage.
        """
        lines = [f"config_hash: {self.config_hash}", f"version: {self.version}"]
        for name in sorted(self.stages, key=lambda s: list(STAGES).index(s) if s in STAGES else len(STAGES)):
            entry = self.stages[name]
            lines.append(f"{name}.key: {entry['key']}")
            for upstream, key in sorted(entry.get("upstream", {}).items()):
                lines.append(f"{name}.upstream.{upstream}: {key}")
            for cap, value in sorted(entry.get("caps", {}).items()):
                lines.append(f"{name}.caps.{cap}: {value}")
            for scalar, value in sorted(entry.get("scalars", {}).items()):
                lines.append(f"{name}.{scalar}: {value}")
            lines.append(f"{name}.created: {entry.get('created', '')}")
        return "\n".join(lines) + "\n"


@dataclass
class PipelineOptions:
    out: Path
    store: Optional[ArtifactStore] = field(default=None)
    seed: Optional[PipelineManifest] = field(default=None)
    library: Optional[DataFrameLibrary] = field(default=None)

    def __post_init__(self):
        self.out = Path(self.out)
        if self.store is None:
            self.store = ArtifactStore.from_env(self.out, _version())
        if self.library is None:
            self.library = PandasDataFrameLibrary()


def _read_series(artifact: Artifact, name: str, kind: Type[Series], caps: Mapping[str, int]) -> Series:
    series = pseries.read(artifact.file(name))
    if not isinstance(series, kind):
        raise StageError(f"{artifact.stage}/{name} is a {series.kind} series.")
    if series.caps != dict(caps):
        raise StageError(f"cap mismatch: {artifact.stage}/{name} has {series.caps}, expected {dict(caps)}.")
    return series


def _chart(artifact: Artifact) -> AdaptedChart:
    return AdaptedChart(**artifact.read_json("chart.json"))


def _comparison_grid(diagonal: DiagonalHamiltonian, config: PipelineConfig) -> np.ndarray:
    period = 2 * math.pi / abs(diagonal.omega[0])
    samples = int(round(config.dynamics.slow_periods * config.dynamics.samples_per_period))
    return np.linspace(0.0, config.dynamics.slow_periods * period, samples + 1)


class Pipeline:
    """
    Runs stages and their upstream stages, reusing committed artifacts.
    """

    def __init__(self, config: PipelineConfig, options: PipelineOptions):
        self._config = config
        self._options = options
        self._resolved: Dict[str, Artifact] = {}
        config_hash = stable_hash(config.as_dict())
        self._manifest = PipelineManifest(config_hash, _version())
        path = options.out / MANIFEST
        if path.exists():
            previous = PipelineManifest.read(path)
            if previous.config_hash == config_hash:
                self._manifest = previous
            else:
                log.info("configuration changed: starting a new manifest.")

    @property
    def manifest(self) -> PipelineManifest:
        return self._manifest

    @property
    def config(self) -> PipelineConfig:
        return self._config

    def run(self, name: str) -> Artifact:
        """
        Runs ``name`` after its upstream stages, or returns the cached artifact.

        Raises:
            ValueError: When the stage is unknown.
            StageError: When an upstream artifact is missing or altered, or caps disagree between stages.
        """
        if name in self._resolved:
            return self._resolved[name]
        if name not in STAGES:
            raise ValueError(f"{name} is not a valid value")
        stage = STAGES[name]
        inputs = {upstream: self.run(upstream) for upstream in stage.upstream}
        store = self._options.store
        seed = self._options.seed
        if seed is not None and name in seed.stages:
            artifact = store.load(seed.stages[name]["key"], name)
            log.info("seeded: %s (%s).", name, artifact.key[:12])
        else:
            config = {section: self._config.section(section) for section in stage.sections}
            key = store.key(name, config, {upstream: a.key for upstream, a in inputs.items()})
            artifact = store.get(key)
            if artifact is not None:
                log.info("cache hit: %s (%s).", name, key[:12])
            else:
                self._check_caps(stage, inputs)
                with store.create(name, key, {upstream: a.key for upstream, a in inputs.items()}) as writer:
                    writer.caps.update(stage.caps(self._config))
                    getattr(self, f"_{name}")(inputs, writer)
                artifact = store.load(key, name)
                log.info("stage %s finished (%s).", name, key[:12])
        self._record(artifact)
        self._resolved[name] = artifact
        return artifact

    def _check_caps(self, stage: Stage, inputs: Mapping[str, Artifact]):
        expected = stage.caps(self._config)
        for artifact in inputs.values():
            for cap, value in artifact.caps.items():
                if cap in expected and expected[cap] != value:
                    raise StageError(
                        f"cap mismatch between {artifact.stage} and {stage.name}: {cap} = {value} != {expected[cap]}."
                    )

    def _record(self, artifact: Artifact):
        self._manifest.stages[artifact.stage] = {
            "key": artifact.key,
            "path": str(artifact.path),
            "upstream": artifact.record.get("upstream", {}),
            "caps": artifact.caps,
            "scalars": artifact.scalars,
            "outputs": sorted(artifact.files),
            "created": artifact.record.get("created"),
        }
        self._options.out.mkdir(parents=True, exist_ok=True)
        self._manifest.write(self._options.out / MANIFEST)

    # stages

    @timeit
    def _expand(self, inputs: Mapping[str, Artifact], out: ArtifactWriter):
        config = self._config
        expansion = build_expansion(config.system, config.expansion)
        expansion.save(out / "expansion.npz")
        n = expansion.chart.n_star
        out.scalars.update(terms=len(expansion), n1=float(n[0]), n2=float(n[1]), mu=config.system.mu)

    @timeit
    def _reduce(self, inputs: Mapping[str, Artifact], out: ArtifactWriter):
        config = self._config
        chart = PoincareChart.from_config(config.system)
        expansion = PoincareExpansion.load(inputs["expand"].file("expansion.npz"), chart, config.expansion)
        state = poincare_state(config.system, chart)
        resonant = ResonantChart.for_resonance(*config.system.resonance).bind(state)
        average = to_resonant_average(expansion, resonant)
        p, _ = resonant.to_resonant(state)
        equilibrium = find_equilibrium(average, (p[0], p[1]))
        diagonal = diagonalize(average, equilibrium, degree=config.series.sqrt_degree)
        initial = initial_condition(config.system, resonant, diagonal)
        average.save(out / "average.npz")
        diagonal.save(out / "diagonal.npz")
        pseries.write(to_action_angle(diagonal), out / "hamiltonian.series")
        out.write_json(
            "initial.json",
            {
                "diagonal": initial.diagonal,
                "resonant_actions": initial.resonant_actions,
                "resonant_angles": initial.resonant_angles,
            },
        )
        out.scalars.update(
            p_delta=equilibrium.p_delta,
            p_sigma=equilibrium.p_sigma,
            equilibrium_iterations=equilibrium.iterations,
            omega1=float(diagonal.omega[0]),
            omega2=float(diagonal.omega[1]),
            p_phi=resonant.p_phi,
            p_theta=resonant.p_theta,
        )

    @timeit
    def _birkhoff(self, inputs: Mapping[str, Artifact], out: ArtifactWriter):
        config = self._config
        H0 = _read_series(inputs["reduce"], "hamiltonian.series", SqrtSeries, _sqrt_caps(config))
        options = config.birkhoff
        intermediate = birkhoff_normalize(
            H0, options=dataclasses.replace(options, steps=min(options.intermediate_steps, options.steps))
        )
        state = intermediate
        while state.step < options.steps:
            state = birkhoff_step(state)
        pseries.write(state.normal_form(), out / "normal_form.series")
        pseries.write(state.hamiltonian(), out / "hamiltonian.series")
        state.chain.save(out / "chain")
        # the Kolmogorov side starts from an earlier step
        pseries.write(intermediate.normal_form(), out / "intermediate_normal_form.series")
        pseries.write(intermediate.hamiltonian(), out / "intermediate.series")
        intermediate.chain.save(out / "intermediate_chain")
        state.ledger.write_csv(out / "ledger.csv", self._options.library)
        out.scalars.update(
            steps=state.step,
            normal_terms=len(state.normal_form()),
            remainder=state.remainder().norm(),
            intermediate_steps=intermediate.step,
            intermediate_remainder=intermediate.remainder().norm(),
            omega1=state.omega[0],
            omega2=state.omega[1],
        )

    @timeit
    def _adapt(self, inputs: Mapping[str, Artifact], out: ArtifactWriter):
        config = self._config
        birkhoff = inputs["birkhoff"]
        normal = _read_series(birkhoff, "intermediate_normal_form.series", SqrtSeries, _sqrt_caps(config))
        hamiltonian = _read_series(birkhoff, "intermediate.series", SqrtSeries, _sqrt_caps(config))
        chain = TransformChain.load(birkhoff.directory("intermediate_chain"))
        start = normalized_start(chain, inputs["reduce"].read_json("initial.json")["diagonal"])
        chart, decomposition, orbit = build_adapted_chart(
            normal, start, config.adapt.periods, config.adapt.samples_per_period
        )
        series = adapted_chart(hamiltonian, chart, **_action_caps(config))
        out.write_json("chart.json", chart.as_dict())
        out.write_json("start.json", {"normalized": start})
        self._options.library.write_csv(orbit.to_frame(self._options.library), out / "orbit.csv")
        lines = [dataclasses.asdict(c) for c in decomposition.components]
        self._options.library.write_csv(self._options.library.create(lines), out / "lines.csv")
        pseries.write(series, out / "adapted.series")
        out.scalars.update(
            **chart.as_dict(),
            gain=circularization_gain(orbit, chart),
            nu1=decomposition.fundamental,
            omega1=series.coefficient((1, 0), (0, 0)).real,
            omega2=series.coefficient((0, 1), (0, 0)).real,
        )

    @timeit
    def _kolmogorov(self, inputs: Mapping[str, Artifact], out: ArtifactWriter):
        config = self._config
        series = _read_series(inputs["adapt"], "adapted.series", ActionSeries, _action_caps(config))
        order_cap = max(config.kolmogorov.order_cap, config.ledger_steps)
        options = dataclasses.replace(config.kolmogorov, order_cap=order_cap)
        state = kolmogorov_normalize(series, options=options)
        extended = kolmogorov_normalize(state, steps=config.ledger_steps - state.step)
        pseries.write(state.hamiltonian(), out / "hamiltonian.series")
        state.chain.save(out / "chain")
        extended.ledger.write_csv(out / "ledger.csv", self._options.library)
        out.scalars.update(
            steps=state.step,
            ledger_steps=extended.step,
            omega1=state.omega[0],
            omega2=state.omega[1],
            energy=state.energy,
        )

    @timeit
    def _calibrate(self, inputs: Mapping[str, Artifact], out: ArtifactWriter):
        config = self._config
        hamiltonian = _read_series(inputs["birkhoff"], "intermediate.series", SqrtSeries, _sqrt_caps(config))
        chart = _chart(inputs["adapt"])
        target = config.calibrate.target
        if target is None:
            target = self._slow_frequency(inputs["reduce"])
        omega = frequency_map(hamiltonian, chart, config.kolmogorov, **_action_caps(config))
        result = newton_calibrate(
            omega, target, chart.p1_star, tol=config.calibrate.tol, max_iter=config.calibrate.max_iter
        )
        chart = chart.with_shift(result.shift)
        series = adapted_chart(hamiltonian, chart, **_action_caps(config))
        state = kolmogorov_normalize(series, options=config.kolmogorov)
        out.write_json("chart.json", chart.as_dict())
        pseries.write(state.hamiltonian(), out / "hamiltonian.series")
        state.chain.save(out / "chain")
        state.ledger.write_csv(out / "ledger.csv", self._options.library)
        history = [{"n": n, "shift": shift, "residual": residual} for n, shift, residual in result.history]
        self._options.library.write_csv(self._options.library.create(history), out / "calibration.csv")
        out.scalars.update(
            target=target,
            I1_shift=result.shift,
            iterations=result.iterations,
            omega1=state.omega[0],
            omega2=state.omega[1],
        )

    def _slow_frequency(self, reduce: Artifact) -> float:
        """
        ``ω₁*``: the dominant line of ``Y₁ + i X₁`` along the flow of the diagonal Hamiltonian.
        """
        config = self._config
        diagonal = DiagonalHamiltonian.load(reduce.file("diagonal.npz"))
        start = reduce.read_json("initial.json")["diagonal"]
        period = 2 * math.pi / abs(diagonal.omega[0])
        dt = period / config.calibrate.samples_per_period
        trajectory = integrate_poly(diagonal, start, config.calibrate.periods * period, dt)
        target = dominant_frequency(trajectory.t, trajectory.signal("Y1") + 1j * trajectory.signal("X1"))
        log.info("calibration target ω₁* = %.15g.", target)
        return target

    @timeit
    def _certify(self, inputs: Mapping[str, Artifact], out: ArtifactWriter):
        config = self._config
        options = config.certify.converge
        series = _read_series(inputs["calibrate"], "hamiltonian.series", ActionSeries, _action_caps(config))
        state = KolmogorovState.from_hamiltonian(series, config.kolmogorov)
        omega_star = tuple(state.omega)
        witness = diophantine_gamma(omega_star, options.tau, options.cutoff)
        explicit, ledger = explicit_stage(state, omega_star, options.r_i)
        bounds = tail_iterate(tail_seed(explicit, options.r_ii), witness.gamma, options.tau, options.r_i, options.r_ii)
        report = certify(bounds, options.threshold)
        dominated = self._dominated(explicit, bounds)
        ledger.write_csv(out / "explicit.csv", self._options.library)
        self._options.library.write_csv(tail_bound_frame(bounds, self._options.library), out / "tail.csv")
        out.write_text("certificate.txt", report.to_text() + f"dominated: {str(dominated).lower()}\n")
        out.scalars.update(
            **report.as_dict(),
            passed=report.passed,
            dominated=dominated,
            gamma_k=list(witness.k),
            omega_star=list(omega_star),
        )

    def _dominated(self, explicit: KolmogorovState, bounds) -> bool:
        """
        Continues with translation-free steps and checks the bounds against the measured norms.
        """
        n = min(self._config.certify.check_steps, len(bounds))
        if n == 0:
            return True
        order_cap = max(explicit.options.order_cap, explicit.step + n + 1)
        options = dataclasses.replace(explicit.options, order_cap=order_cap)
        measured = kolmogorov_normalize(dataclasses.replace(explicit, ledger=NormLedger(), options=options), steps=n)
        chi0 = measured.ledger.column("norm_chi0")
        chi1 = measured.ledger.column("norm_chi1")
        return bool(np.all(bounds.chi0[:n] >= chi0) and np.all(bounds.chi1[:n] >= chi1))

    @timeit
    def _integrate(self, inputs: Mapping[str, Artifact], out: ArtifactWriter):
        config = self._config
        dynamics = config.dynamics
        trajectory = integrate_full(config.system, dynamics.full_span, dynamics.full_step, dynamics.sample_every)
        angles = resonant_angles(trajectory, config.system)
        sigma, delta = libration(angles.sigma), libration(angles.delta)
        trajectory.write_csv(out / "trajectory.csv", self._options.library)
        self._options.library.write_csv(angles.to_frame(self._options.library), out / "angles.csv")
        out.scalars.update(
            sigma_center=sigma.center,
            sigma_width=sigma.width,
            sigma_librates=sigma.librates,
            delta_center=delta.center,
            delta_width=delta.width,
            delta_librates=delta.librates,
            e1_max=float(angles.e1.max()),
            energy_drift=energy_drift(trajectory),
        )

    @timeit
    def _compare(self, inputs: Mapping[str, Artifact], out: ArtifactWriter):
        config = self._config
        reduce, birkhoff, calibrate = inputs["reduce"], inputs["birkhoff"], inputs["calibrate"]
        diagonal = DiagonalHamiltonian.load(reduce.file("diagonal.npz"))
        start = np.asarray(reduce.read_json("initial.json")["diagonal"], dtype=float)
        chain = TransformChain.load(birkhoff.directory("chain"))
        normal = _read_series(birkhoff, "normal_form.series", SqrtSeries, _sqrt_caps(config))
        t = _comparison_grid(diagonal, config)

        direct = integrate_poly(diagonal, start, t[-1], t[1] - t[0])
        semi = reconstruct(Reconstruction(chain, normal_form=normal), start, t)
        omega = FrequencyVector((calibrate.scalars["omega1"], calibrate.scalars["omega2"]))
        torus = Reconstruction(
            TransformChain.load(birkhoff.directory("intermediate_chain")),
            chart=_chart(calibrate),
            kolmogorov=TransformChain.load(calibrate.directory("chain")),
            omega=omega,
        )
        kolmogorov = reconstruct(torus, start, t)

        library = self._options.library
        for name, trajectory in (("direct", direct), ("birkhoff", semi), ("kolmogorov", kolmogorov)):
            trajectory.write_csv(out / f"{name}.csv", library)
        for figure, (a, b) in zip(COMPARISONS, ((direct, semi), (semi, kolmogorov))):
            metrics = compare(a, b, library)
            library.write_csv(metrics, out / f"{figure}.csv")
            for row in metrics.to_dict("records"):
                for metric in ("rms", "amplitude", "frequency", "nu", "scale"):
                    out.scalars[f"{figure}.{row['signal']}.{metric}"] = float(row[metric])

    @timeit
    def _figures(self, inputs: Mapping[str, Artifact], out: ArtifactWriter):
        library = self._options.library
        angles, _ = library.read_csv(inputs["integrate"].file("angles.csv"))
        library.write_csv(angles[["t", "sigma", "delta"]], out / "figure1.csv")
        library.write_csv(angles[["t", "e1", "e2"]], out / "figure2.csv")

        compared = inputs["compare"]
        for source, target in (
            ("direct.csv", "figure3_direct.csv"),
            ("birkhoff.csv", "figure3_semianalytic.csv"),
            ("birkhoff.csv", "figure7_semianalytic.csv"),
            ("kolmogorov.csv", "figure7_kolmogorov.csv"),
        ):
            trajectory = Trajectory.read_csv(compared.file(source), library)
            trajectory.write_csv(out / target, library)

        adapt = inputs["adapt"]
        orbit, _ = library.read_csv(adapt.file("orbit.csv"))
        library.write_csv(orbit, out / "figure4.csv")
        lines, _ = library.read_csv(adapt.file("lines.csv"))
        library.write_csv(lines, out / "figure4_lines.csv")
        chart = _chart(adapt)
        v1, u1 = chart.circularize(orbit["Y1"].to_numpy(), orbit["X1"].to_numpy())
        library.write_csv(
            library.from_columns(
                {
                    "t": orbit["t"].to_numpy(),
                    "J1": 0.5 * (orbit["Y1"].to_numpy() ** 2 + orbit["X1"].to_numpy() ** 2),
                    "K1": 0.5 * (v1**2 + u1**2),
                }
            ),
            out / "figure5.csv",
        )

        ledger, _ = library.read_csv(inputs["kolmogorov"].file("ledger.csv"))
        library.write_csv(ledger, out / "figure6.csv")
        tail, _ = library.read_csv(inputs["certify"].file("tail.csv"))
        library.write_csv(tail, out / "figure8.csv")

        target = self._options.out / "figures"
        target.mkdir(parents=True, exist_ok=True)
        for path in sorted(out.path.glob("figure*.csv")):
            shutil.copyfile(path, target / path.name)
        out.scalars["figures"] = sorted(p.name for p in out.path.glob("figure*.csv"))

    @timeit
    def _accept(self, inputs: Mapping[str, Artifact], out: ArtifactWriter):
        checks = _acceptance.evaluate({name: artifact.scalars for name, artifact in inputs.items()})
        frame = _acceptance.acceptance_frame(checks, self._options.library)
        self._options.library.write_csv(frame, out / "acceptance.csv")
        out.scalars.update(passed=all(c.passed for c in checks), failed=[c.criterion for c in checks if not c.passed])


def run(
    stage: str,
    config: PipelineConfig,
    out: Union[str, Path] = ".",
    seed: Optional[PipelineManifest] = None,
    store: Optional[ArtifactStore] = None,
) -> Artifact:
    """
    Runs one stage of the pipeline and its upstream stages.

    Args:
        stage: One of :data:`STAGES`.
        config: The pipeline configuration.
        out: The directory of the manifest and the figure files.
        seed: A manifest whose stage keys are reused instead of being recomputed.
        store: The artifact store; ``$RESKAM_CACHE`` or ``<out>/.reskam-cache`` by default.

    Returns:
        The artifact of ``stage``.
    """
    return Pipeline(config, PipelineOptions(Path(out), store=store, seed=seed)).run(stage)


def export(path: Union[str, Path], fmt: str, library: Optional[DataFrameLibrary] = None) -> str:
    """
    Renders an artifact file in one of :data:`FORMATS`.

    ``text`` re-serializes a series file, ``csv`` a CSV file (or the terms of a series) and ``manifest`` renders a
    manifest as ``key: value`` lines.

    Raises:
        ValueError: When the format is unknown or does not apply to the file.
    """
    path = Path(path)
    library = library or PandasDataFrameLibrary()
    match fmt:
        case "text":
            if path.suffix != ".series":
                raise ValueError(f"{path.name} is not a valid value")
            return pseries.dumps(pseries.read(path))
        case "csv":
            buffer = io.StringIO()
            if path.suffix == ".series":
                series = pseries.read(path)
                terms = [
                    {"l1": e[0], "l2": e[1], "k1": k[0], "k2": k[1], "re": c.real, "im": c.imag}
                    for e, k, c in series.terms()
                ]
                library.write_csv(library.create(terms), buffer, comment=f"kind: {series.kind}")
            else:
                df, comment = library.read_csv(path)
                library.write_csv(df, buffer, comment)
            return buffer.getvalue()
        case "manifest":
            return PipelineManifest.read(path).to_text()
        case _:
            raise ValueError(f"{fmt} is not a valid value")
