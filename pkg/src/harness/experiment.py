"""Experiment specs and the train, eval, gen and sweep commands."""

import copy
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src import __version__
from src.core.errors import BBPLError, ValidationError
from src.core.trace import HyperStore
from src.data.load_data import load_field, load_instance, load_ontology, save_field, save_instance
from src.domains.ctp import TRAIN_SETTINGS as CTP_TRAIN
from src.domains.ctp import CtpProgram, CtpWorld, generate_instance, with_open_prob
from src.domains.guesswho import GuessWhoProgram, GuessWhoWorld, LearnedSettings
from src.domains.rocksample import MOVE_POLICIES, RockProgram, RockWorld, make_field
from src.harness import reports
from src.models.predict_model import EvaluationResult, evaluate, load_store, store_summary
from src.models.train_model import PolicyProgram, TrainConfig, WorldSimulator, save_store, train
from src.utils.helpers import ensure_dir, spec_hash, write_csv

logger = logging.getLogger(__name__)

DOMAINS = ("ctp", "rocksample", "guesswho")
LEARNED_POLICY = {"ctp": "edge", "rocksample": "learned", "guesswho": "learned"}
DEFAULT_BASELINES = {
    "ctp": ("optimistic", "random"),
    "rocksample": ("prior", "always_move", "always_discard"),
    "guesswho": ("random", "voi"),
}
# Address tags a trained store may hold, per domain
STORE_TAGS = {"ctp": {"Q"}, "rocksample": {"move"}, "guesswho": {"A", "gamma"}}
SWEEP_STREAM = 2

DEFAULTS: Dict[str, Dict[str, Any]] = {
    "experiment": {
        "domain": "ctp",
        "policy": None,
        "baselines": None,
        "episodes": 1000,
        "seed": 0,
        "out": "outputs",
        "workers": 1,
    },
    "ctp": {"instance": None, "n_nodes": 20, "radius": 0.35, "open_prob": 0.8,
            "open_fraction": None, "train": dict(CTP_TRAIN)},
    "rocksample": {"field": None, "size": 5, "rocks": 5, "d0": None, "fixed_qualities": False,
                   "train": {}},
    "guesswho": {
        "ontology": None,
        "questions": 6,
        "accuracy": 0.9,
        "a_sigma": 1.0,
        "learn_a_sigma": False,
        "learn_gamma_sigma": True,
        "budgets": list(range(11)),
        "train": {},
    },
    "sweep": {"steps": [1, 2, 5, 10, 20, 50, 100, 200], "restarts": 5, "episodes": 1000,
              "tolerance": 0.1},
}


def _section(config: Dict[str, Any], name: str) -> Dict[str, Any]:
    values = config.get(name) or {}
    if not isinstance(values, dict):
        raise ValidationError(f"Config section {name!r} must be a mapping")
    unknown = sorted(set(values) - set(DEFAULTS[name]))
    if unknown:
        raise ValidationError(f"Unknown keys in config section {name!r}: {unknown}")
    merged = copy.deepcopy(DEFAULTS[name])
    merged.update(values)
    return merged


@dataclass
class ExperimentSpec:
    """
    One fully resolved experiment.

    Args:
        domain: 'ctp', 'rocksample' or 'guesswho'
        policy: Policy that is trained and evaluated with the learned store
        train: Learning-phase settings (its seed is the master seed)
        episodes: Test episodes per policy
        baselines: Policies evaluated next to the learned one
        settings: Domain settings
        sweep: Sweep settings
        out: Output directory
        seed: Master seed
        workers: Parallel workers (never changes results)
    """

    domain: str
    policy: str
    train: TrainConfig
    episodes: int
    baselines: Tuple[str, ...]
    settings: Dict[str, Any]
    sweep: Dict[str, Any]
    out: Path
    seed: int
    workers: int = 1

    @classmethod
    def from_config(cls, config: Dict[str, Any], domain: Optional[str] = None,
                    seed: Optional[int] = None, out: Optional[str] = None,
                    workers: Optional[int] = None) -> "ExperimentSpec":
        """
        Resolve a config mapping plus command-line overrides.

        Args:
            config: Loaded configuration (missing sections take defaults)
            domain: Domain override
            seed: Master seed override
            out: Output directory override
            workers: Worker count override

        Returns:
            Validated ExperimentSpec
        """
        unknown = sorted(set(config) - set(DEFAULTS) - {"train", "logging"})
        if unknown:
            raise ValidationError(f"Unknown config sections: {unknown}")
        experiment = _section(config, "experiment")
        domain = domain or experiment["domain"]
        if domain not in DOMAINS:
            raise ValidationError(f"Unknown domain {domain!r}, expected one of {DOMAINS}")
        seed = int(experiment["seed"] if seed is None else seed)
        if not 0 <= seed < 2 ** 64:
            raise ValidationError(f"Seed must be an unsigned 64-bit integer, got {seed}")

        settings = _section(config, domain)
        settings.pop("train")
        domain_train = (config.get(domain) or {}).get("train") or {}
        if not isinstance(domain_train, dict):
            raise ValidationError(f"Config section {domain}.train must be a mapping")
        # domain defaults < shared train section < the domain's own train mapping
        train_values = {**DEFAULTS[domain]["train"], **(config.get("train") or {}), **domain_train}
        train_values["seed"] = seed
        baselines = experiment["baselines"]
        spec = cls(
            domain=domain,
            policy=experiment["policy"] or LEARNED_POLICY[domain],
            train=TrainConfig.from_dict(train_values),
            episodes=int(experiment["episodes"]),
            baselines=tuple(DEFAULT_BASELINES[domain] if baselines is None else baselines),
            settings=settings,
            sweep=_section(config, "sweep"),
            out=Path(out or experiment["out"]),
            seed=seed,
            workers=int(experiment["workers"] if workers is None else workers),
        )
        spec.validate()
        return spec

    def validate(self):
        if self.episodes < 1:
            raise ValidationError(f"episodes must be >= 1, got {self.episodes}")
        if self.workers < 1:
            raise ValidationError(f"workers must be >= 1, got {self.workers}")
        known = policies_of(self.domain)
        for policy in (self.policy, *self.baselines):
            if policy not in known:
                raise ValidationError(
                    f"Unknown {self.domain} policy {policy!r}, expected one of {known}"
                )
        for key in ("instance", "field", "ontology"):
            path = self.settings.get(key)
            if path is not None and not Path(path).exists():
                raise ValidationError(f"{self.domain}.{key} file not found: {path}")

    def resolved(self) -> Dict[str, Any]:
        """Everything that determines results, as plain data."""
        return {
            "domain": self.domain,
            "policy": self.policy,
            "train": self.train.to_dict(),
            "episodes": self.episodes,
            "baselines": list(self.baselines),
            self.domain: self.settings,
            "sweep": self.sweep,
            "seed": self.seed,
        }

    @property
    def spec_hash(self) -> str:
        return spec_hash(self.resolved())

    def header(self, policy: Optional[str] = None) -> Dict[str, Any]:
        """Comment lines embedded in every output file."""
        return {
            "version": __version__,
            "spec_hash": self.spec_hash,
            "seed": self.seed,
            "domain": self.domain,
            "policy": policy or self.policy,
        }


def policies_of(domain: str) -> Tuple[str, ...]:
    if domain == "ctp":
        return CtpProgram.POLICIES
    if domain == "rocksample":
        return ("prior", *MOVE_POLICIES)
    return ("random", "voi", "learned")


@dataclass
class Domain:
    """World simulator and the policy programs of one experiment."""

    name: str
    world: WorldSimulator
    programs: Dict[str, PolicyProgram]
    instance: Any


def build_domain(spec: ExperimentSpec) -> Domain:
    """
    Load or generate the domain instance and wrap it for training.

    Generated instances are drawn from the master seed.
    """
    s = spec.settings
    if spec.domain == "ctp":
        if s["instance"]:
            instance = load_instance(s["instance"])
        else:
            instance = generate_instance(int(s["n_nodes"]), float(s["radius"]),
                                         float(s["open_prob"]), spec.seed)
        if s["open_fraction"] is not None:
            instance = with_open_prob(instance, float(s["open_fraction"]))
        programs = {p: CtpProgram(instance, p) for p in CtpProgram.POLICIES}
        return Domain("ctp", CtpWorld(instance), programs, instance)

    if spec.domain == "rocksample":
        if s["field"]:
            field = load_field(s["field"])
        else:
            field = make_field(int(s["size"]), int(s["rocks"]), spec.seed,
                               None if s["d0"] is None else float(s["d0"]))
        programs: Dict[str, PolicyProgram] = {p: RockProgram(field, p) for p in MOVE_POLICIES}
        programs["prior"] = programs["learned"]
        return Domain("rocksample", RockWorld(field, bool(s["fixed_qualities"])), programs, field)

    ontology = load_ontology(s["ontology"])
    settings = LearnedSettings(float(s["a_sigma"]), bool(s["learn_a_sigma"]),
                               bool(s["learn_gamma_sigma"]))
    budget, accuracy = int(s["questions"]), float(s["accuracy"])
    programs = {
        p: GuessWhoProgram(ontology, budget, accuracy, p, settings)
        for p in ("random", "voi", "learned")
    }
    return Domain("guesswho", GuessWhoWorld(ontology, budget), programs, ontology)


def check_store(spec: ExperimentSpec, store: HyperStore, header: Dict[str, str]):
    """Reject a store trained for another domain."""
    stored = header.get("domain")
    if stored is not None and stored != spec.domain:
        raise ValidationError(f"Hyperstore was trained on {stored}, not {spec.domain}")
    foreign = sorted({address.tag for address in store} - STORE_TAGS[spec.domain])
    if foreign:
        raise ValidationError(f"Hyperstore holds addresses foreign to {spec.domain}: {foreign}")


def cmd_train(spec: ExperimentSpec, progress: bool = False) -> Dict[str, Path]:
    """
    Train the experiment's policy and save the store and the history.

    Returns:
        Paths of the written files
    """
    domain = build_domain(spec)
    logger.info(f"Training {spec.domain}/{spec.policy} (spec {spec.spec_hash[:12]})")
    store, history = train(domain.programs[spec.policy], domain.world, spec.train,
                           workers=spec.workers, progress=progress)
    logger.info(f"Trained hyperstore: {store_summary(store)}")
    out = ensure_dir(spec.out)
    header = spec.header()
    paths = {"hyperstore": out / "hyperstore.txt", "history": out / "history.csv"}
    save_store(store, paths["hyperstore"], header)
    write_csv(history, paths["history"], header)
    return paths


def evaluate_policies(spec: ExperimentSpec, domain: Domain,
                      store: HyperStore) -> Dict[str, EvaluationResult]:
    """Learned policy with `store`, every baseline with an empty store."""
    results = {}
    for policy in (spec.policy, *spec.baselines):
        policy_store = store if policy == spec.policy else HyperStore()
        results[policy] = evaluate(domain.programs[policy], domain.world, policy_store,
                                   spec.episodes, spec.seed, spec.workers)
        logger.info(f"{policy}: mean reward {results[policy].mean:.4f} "
                    f"+/- {results[policy].stderr:.4f}")
    return results


def cmd_eval(spec: ExperimentSpec, store_path: Optional[str] = None) -> Dict[str, Path]:
    """
    Evaluate the learned store and the baselines.

    Args:
        spec: Experiment spec
        store_path: Saved store (``<out>/hyperstore.txt`` by default)

    Returns:
        Paths of the written files
    """
    store_path = Path(store_path) if store_path else spec.out / "hyperstore.txt"
    store, store_header = load_store(str(store_path))
    logger.info(f"Loaded hyperstore {store_path}: {store_summary(store)}")
    check_store(spec, store, store_header)
    domain = build_domain(spec)
    results = evaluate_policies(spec, domain, store)

    out = ensure_dir(spec.out)
    header = spec.header()
    tables = {
        "episodes.csv": reports.episodes_table(results),
        "summary.csv": reports.summary_table(results),
    }
    tables.update(reports.domain_tables(spec, domain, results, store))
    paths = {}
    for name, table in tables.items():
        paths[name] = out / name
        write_csv(table, paths[name], header)
    return paths


def cmd_gen(spec: ExperimentSpec) -> Path:
    """Generate a CTP instance or RockSample field from the master seed."""
    s = spec.settings
    out = ensure_dir(spec.out)
    header = spec.header()
    if spec.domain == "ctp":
        instance = generate_instance(int(s["n_nodes"]), float(s["radius"]),
                                     float(s["open_prob"]), spec.seed)
        path = out / "instance.yaml"
        save_instance(instance, path, header)
        return path
    if spec.domain == "rocksample":
        field = make_field(int(s["size"]), int(s["rocks"]), spec.seed,
                           None if s["d0"] is None else float(s["d0"]))
        path = out / "field.yaml"
        save_field(field, path, header)
        return path
    raise ValidationError("Guess Who uses the fixed ontology; there is nothing to generate")


def restart_seed(master_seed: int, restart: int) -> int:
    """Seed of one sweep restart; the same at every step count."""
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(SWEEP_STREAM, restart))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def run_sweep(spec: ExperimentSpec, steps: Sequence[int], restarts: int) -> pd.DataFrame:
    """
    Independent train and eval runs for every step count and restart.

    Failed runs are recorded with the error class as status.

    Returns:
        DataFrame with columns policy, steps, restart, mean_reward, status
    """
    if not steps:
        raise ValidationError("Sweep needs at least one step count")
    if restarts < 1:
        raise ValidationError(f"restarts must be >= 1, got {restarts}")
    domain = build_domain(spec)
    program = domain.programs[spec.policy]
    episodes = int(spec.sweep["episodes"])

    rows: List[Dict[str, Any]] = []
    for n_steps in steps:
        for restart in range(restarts):
            seed = restart_seed(spec.seed, restart)
            try:
                config = replace(spec.train, steps=int(n_steps), seed=seed)
                store, _ = train(program, domain.world, config, workers=spec.workers, log_every=0)
                result = evaluate(program, domain.world, store, episodes, seed, spec.workers)
                rows.append({"policy": spec.policy, "steps": int(n_steps), "restart": restart,
                             "mean_reward": result.mean, "status": "ok"})
            except BBPLError as e:
                logger.warning(f"Sweep run steps={n_steps} restart={restart} failed: {e}")
                rows.append({"policy": spec.policy, "steps": int(n_steps), "restart": restart,
                             "mean_reward": np.nan, "status": type(e).__name__})
        logger.info(f"Sweep: finished {n_steps} steps x {restarts} restarts")
    return pd.DataFrame(rows, columns=["policy", "steps", "restart", "mean_reward", "status"])


def cmd_sweep(spec: ExperimentSpec, steps: Optional[Sequence[int]] = None,
              restarts: Optional[int] = None) -> Dict[str, Path]:
    """
    Convergence sweep over total gradient steps.

    Returns:
        Paths of the written files
    """
    steps = list(spec.sweep["steps"] if steps is None else steps)
    restarts = int(spec.sweep["restarts"] if restarts is None else restarts)
    table = run_sweep(spec, steps, restarts)
    convergence, converged = reports.convergence_table(table, float(spec.sweep["tolerance"]))
    logger.info(f"Consistent convergence beyond {reports.CONVERGENCE_MIN_STEPS} steps: {converged}")

    out = ensure_dir(spec.out)
    header = spec.header()
    paths = {"sweep": out / "sweep.csv", "convergence": out / "convergence.csv"}
    write_csv(table, paths["sweep"], header)
    write_csv(convergence, paths["convergence"], header)
    return paths
