"""Training and evaluation orchestration.

Training cycles through the (shuffled) training problems, one full DE run
per problem with epsilon-greedy selection, and checkpoints the primary
network whenever a cycle's mean per-step reward beats the best seen.
Evaluation runs each policy independently R times per problem with greedy
selection for trained policies and reports mean/std final errors plus
mean ranks across problems.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from deopt.agent import AgentConfig, DdqnAgent, Observation
from deopt.bench import (
    DEFAULT_TEST_FUNCTIONS,
    DEFAULT_TRAIN_FUNCTIONS,
    BenchError,
    ObjectiveFunction,
    build_function,
    load_transform_data,
    make_suite,
)
from deopt.de import DEParams, DERun, N_STRATEGIES, Strategy
from deopt.features import FEATURE_LAYOUT_VERSION
from deopt.neural import CheckpointError, QNetwork, load_weights, save_weights
from deopt.rewards import R3_DEFAULT_CAP, RewardKind, reward


class ConfigError(ValueError):
    """Bad configuration file or value."""


@dataclass
class Config:
    """All tunables, with the published defaults."""

    seed: int = 1
    # DE
    f: float = 0.5
    cr: float = 1.0
    np_size: int = 100
    fe_max: int = 10_000
    stop_tol: float = 1e-8
    # feature bookkeeping
    gen_history: int = 10
    window_size: int = 50
    # network
    hidden_layers: int = 4
    hidden_nodes: int = 100
    learning_rate: float = 1e-4
    grad_clip: float = 0.0  # 0 disables clipping
    # agent
    batch_size: int = 64
    epsilon: float = 0.1
    gamma: float = 0.99
    sync_period: int = 1000
    memory_capacity: int = 100_000
    warmup_size: int = 10_000
    # reward
    reward: str = "r2"
    r3_cap: float = R3_DEFAULT_CAP
    # suite
    train_functions: list[str] = field(default_factory=lambda: list(DEFAULT_TRAIN_FUNCTIONS))
    test_functions: list[str] = field(default_factory=lambda: list(DEFAULT_TEST_FUNCTIONS))
    dims: list[int] = field(default_factory=lambda: [10, 30])
    # training schedule
    cycles: int = 100
    patience: int = 50
    # evaluation protocol
    runs: int = 25

    def de_params(self) -> DEParams:
        return DEParams(
            F=self.f, CR=self.cr, NP=self.np_size, budget=self.fe_max, stop_tol=self.stop_tol
        )

    def reward_kind(self) -> RewardKind:
        try:
            return RewardKind(self.reward)
        except ValueError:
            raise ConfigError(f"unknown reward kind {self.reward!r}") from None

    def network_dims(self) -> tuple[int, ...]:
        from deopt.features import N_FEATURES

        return (N_FEATURES, *([self.hidden_nodes] * self.hidden_layers), N_STRATEGIES)

    def config_hash(self) -> str:
        blob = json.dumps(
            {f.name: getattr(self, f.name) for f in fields(self)}, sort_keys=True
        )
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_LIST_KEYS = {"train_functions", "test_functions", "dims"}


def parse_config(path: str | Path) -> Config:
    """Read a key = value config file; unknown keys are rejected."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    valid = {f.name: f.type for f in fields(Config)}
    cfg = Config()
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, raw = line.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in valid:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            if key in _LIST_KEYS:
                items = [tok.strip() for tok in raw.split(",") if tok.strip()]
                value = [int(v) for v in items] if key == "dims" else items
            else:
                default = getattr(Config(), key)
                if isinstance(default, bool):
                    value = raw.lower() in ("1", "true", "yes")
                elif isinstance(default, int):
                    value = int(float(raw))
                elif isinstance(default, float):
                    value = float(raw)
                else:
                    value = raw
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from None
        setattr(cfg, key, value)
    overlap = set(cfg.train_functions) & set(cfg.test_functions)
    if overlap:
        raise ConfigError(f"train/test sets overlap: {sorted(overlap)}")
    return cfg


def derive_seed(master: int, *parts: str) -> int:
    """Stable per-run seed from the master seed and a label path."""
    text = f"{master}|" + "|".join(parts)
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little")


# --- policies ---------------------------------------------------------------

class FixedPolicy:
    needs_state = False

    def __init__(self, strategy: Strategy):
        self.strategy = Strategy(strategy)

    def select(self, state, rng) -> Strategy:
        return self.strategy


class RandomPolicy:
    needs_state = False

    def select(self, state, rng) -> Strategy:
        return Strategy(int(rng.integers(N_STRATEGIES)))


class GreedyNetworkPolicy:
    needs_state = True

    def __init__(self, net: QNetwork):
        self.net = net

    def select(self, state, rng) -> Strategy:
        return Strategy(int(np.argmax(self.net.forward(state))))


_FIXED_NAMES = {s.name.lower(): s for s in Strategy}


def resolve_policy(spec: str) -> tuple[str, object, int | None]:
    """Parse a policy spec into (label, policy, dim_max from checkpoint)."""
    if spec == "random":
        return "random", RandomPolicy(), None
    if spec.startswith("fixed:"):
        name = spec.split(":", 1)[1]
        if name not in _FIXED_NAMES:
            raise ConfigError(
                f"unknown strategy {name!r}; choose from {sorted(_FIXED_NAMES)}"
            )
        return spec, FixedPolicy(_FIXED_NAMES[name]), None
    if spec.startswith("ddqn:"):
        ckpt = spec.split(":", 1)[1]
        net, metadata = load_weights(ckpt)
        return spec, GreedyNetworkPolicy(net), int(metadata.get("dim_max", 0)) or None
    raise ConfigError(f"unknown policy spec {spec!r}")


# --- single runs -------------------------------------------------------------

def run_policy(
    func: ObjectiveFunction,
    params: DEParams,
    policy,
    rng: np.random.Generator,
    dim_max: int | None = None,
    gen_history: int = 10,
    window_size: int = 50,
) -> tuple[float, int]:
    """One full DE run under a policy; returns (final error, evals used)."""
    run = DERun(
        func,
        params,
        rng,
        dim_max=dim_max,
        gen_history=gen_history,
        window_size=window_size,
        track_features=policy.needs_state,
    )
    while not run.done:
        state = run.observe() if policy.needs_state else None
        run.step(policy.select(state, rng))
    return run.final_error, run.state.t


# --- training ----------------------------------------------------------------

@dataclass
class TrainReport:
    cycle_rewards: list[float]
    best_cycle: int
    checkpoint_path: str
    total_evaluations: int


def _training_run(
    run: DERun, agent: DdqnAgent, kind: RewardKind, r3_cap: float
) -> tuple[float, int]:
    """One epsilon-greedy DE run feeding the agent; returns (reward sum, steps)."""
    total, steps = 0.0, 0
    f_opt = run.func.f_optimum
    state = run.observe()
    while True:
        action = agent.act(state)
        res = run.step(action)
        r = reward(kind, res.f_parent, res.f_trial, res.f_bsf_before, f_opt, r3_cap)
        total += r
        steps += 1
        if res.done:
            agent.observe(Observation(state, int(action), r, np.zeros_like(state), True))
            break
        next_state = run.observe()
        agent.observe(Observation(state, int(action), r, next_state, False))
        state = next_state
    return total, steps


def _warmup(
    agent: DdqnAgent,
    suite: list[ObjectiveFunction],
    cfg: Config,
    dim_max: int,
    rng: np.random.Generator,
) -> int:
    """Fill the replay memory with uniform-random-strategy observations."""
    params = cfg.de_params()
    kind = cfg.reward_kind()
    evals = 0
    k = 0
    while len(agent.memory) < cfg.warmup_size:
        func = suite[k % len(suite)]
        k += 1
        run = DERun(
            func, params, rng, dim_max=dim_max,
            gen_history=cfg.gen_history, window_size=cfg.window_size,
        )
        state = run.observe()
        while len(agent.memory) < cfg.warmup_size:
            action = Strategy(int(rng.integers(N_STRATEGIES)))
            res = run.step(action)
            r = reward(kind, res.f_parent, res.f_trial, res.f_bsf_before,
                       func.f_optimum, cfg.r3_cap)
            if res.done:
                agent.memory.push(
                    Observation(state, int(action), r, np.zeros_like(state), True)
                )
                break
            next_state = run.observe()
            agent.memory.push(Observation(state, int(action), r, next_state, False))
            state = next_state
        evals += run.state.t
    return evals


def train(cfg: Config, checkpoint_path: str | Path, log_path: str | Path | None = None) -> TrainReport:
    """Offline training over the configured training suite."""
    if cfg.cycles < 1:
        raise ConfigError("training requires at least one cycle")
    if not cfg.train_functions:
        raise ConfigError("training suite is empty")
    kind = cfg.reward_kind()
    suite = make_suite(cfg.train_functions, cfg.dims)
    if kind is RewardKind.R3 and any(f.f_optimum is None for f in suite):
        raise ConfigError("R3 requires a known optimum on every training function")
    dim_max = max(f.dim for f in suite)

    checkpoint_path = Path(checkpoint_path)
    try:
        checkpoint_path.touch()
    except OSError as exc:
        raise ConfigError(f"checkpoint path not writable: {exc}") from None

    primary = QNetwork.create(derive_seed(cfg.seed, "init"), dims=cfg.network_dims())
    agent = DdqnAgent(
        primary,
        AgentConfig(
            epsilon=cfg.epsilon,
            gamma=cfg.gamma,
            sync_period=cfg.sync_period,
            batch_size=cfg.batch_size,
            warmup_size=cfg.warmup_size,
            memory_capacity=cfg.memory_capacity,
        ),
        np.random.default_rng(derive_seed(cfg.seed, "agent")),
        learning_rate=cfg.learning_rate,
    )
    if cfg.grad_clip > 0:
        agent.adam.grad_clip = cfg.grad_clip

    total_evals = _warmup(
        agent, suite, cfg, dim_max, np.random.default_rng(derive_seed(cfg.seed, "warmup"))
    )

    metadata = {
        "dim_max": dim_max,
        "reward": cfg.reward,
        "config_hash": cfg.config_hash(),
        "adam": {"learning_rate": cfg.learning_rate, "beta1": 0.9, "beta2": 0.999,
                 "eps": 1e-8},
    }
    params = cfg.de_params()
    shuffle_rng = np.random.default_rng(derive_seed(cfg.seed, "shuffle"))
    cycle_rewards: list[float] = []
    log_rows: list[tuple[int, float, bool]] = []
    best_reward = -np.inf
    best_cycle = -1
    order = np.arange(len(suite))
    for cycle in range(cfg.cycles):
        reward_sum, step_sum = 0.0, 0
        for j in order:
            func = suite[j]
            run_rng = np.random.default_rng(
                derive_seed(cfg.seed, "train", func.id, str(cycle))
            )
            run = DERun(
                func, params, run_rng, dim_max=dim_max,
                gen_history=cfg.gen_history, window_size=cfg.window_size,
            )
            total, steps = _training_run(run, agent, kind, cfg.r3_cap)
            reward_sum += total
            step_sum += steps
            total_evals += run.state.t
        mean_reward = reward_sum / step_sum if step_sum else 0.0
        cycle_rewards.append(mean_reward)
        improved = mean_reward > best_reward
        if improved:
            best_reward = mean_reward
            best_cycle = cycle
            save_weights(agent.primary, checkpoint_path, metadata=metadata)
        log_rows.append((cycle, mean_reward, improved))
        order = shuffle_rng.permutation(len(suite))
        if cycle - best_cycle >= cfg.patience:
            break

    if log_path is not None:
        lines = ["# mean_reward = per-step reward averaged over all runs in the cycle",
                 "cycle,mean_reward,checkpointed"]
        lines += [f"{c},{m!r},{int(ck)}" for c, m, ck in log_rows]
        Path(log_path).write_text("\n".join(lines) + "\n")

    return TrainReport(
        cycle_rewards=cycle_rewards,
        best_cycle=best_cycle,
        checkpoint_path=str(checkpoint_path),
        total_evaluations=total_evals,
    )


# --- evaluation ----------------------------------------------------------------

@dataclass
class EvalResults:
    methods: list[str]
    problems: list[str]
    rows: list[tuple[str, str, int, int, float, int]]
    summary: dict[tuple[str, str], tuple[float, float]]
    mean_ranks: dict[str, float]

    def results_csv(self) -> str:
        lines = ["method,problem,dim,run,final_error,evals_used"]
        lines += [
            f"{m},{p},{d},{r},{e!r},{n}" for m, p, d, r, e, n in self.rows
        ]
        return "\n".join(lines) + "\n"

    def ranks_csv(self) -> str:
        lines = ["method,mean_rank"]
        lines += [f"{m},{self.mean_ranks[m]!r}" for m in self.methods]
        return "\n".join(lines) + "\n"


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """Ranks starting at 1, ties sharing the average rank."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size)
    i = 0
    sorted_vals = values[order]
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def rank(mean_errors: np.ndarray) -> np.ndarray:
    """Mean rank per method from a methods x problems matrix of mean errors."""
    mean_errors = np.asarray(mean_errors, dtype=float)
    if not np.all(np.isfinite(mean_errors)):
        raise ValueError("mean-error matrix contains non-finite entries")
    per_problem = np.stack(
        [_average_ranks(mean_errors[:, p]) for p in range(mean_errors.shape[1])],
        axis=1,
    )
    return per_problem.mean(axis=1)


_WORKER_POLICIES: dict[str, tuple] = {}


def _eval_one(args):
    label, spec, func_name, dim, run_idx, seed, params, gen_history, window_size = args
    if spec not in _WORKER_POLICIES:
        _WORKER_POLICIES[spec] = resolve_policy(spec)[1:]
    policy, dim_max = _WORKER_POLICIES[spec]
    func = build_function(func_name, dim)
    rng = np.random.default_rng(derive_seed(seed, "eval", label, func.id, str(run_idx)))
    err, evals = run_policy(
        func, params, policy, rng,
        dim_max=dim_max, gen_history=gen_history, window_size=window_size,
    )
    return err, evals


def evaluate(
    policy_specs: list[str],
    suite: list[ObjectiveFunction],
    runs: int,
    seed: int,
    params: DEParams,
    gen_history: int = 10,
    window_size: int = 50,
    jobs: int = 1,
) -> EvalResults:
    """Run every policy `runs` times on every problem and aggregate."""
    resolved = [(spec, *resolve_policy(spec)) for spec in policy_specs]
    methods = [label for _, label, _, _ in resolved]
    problems = [f.id for f in suite]

    rows = []
    errors = np.zeros((len(resolved), len(suite), runs))
    if jobs > 1:
        tasks = []
        for mi, (spec, label, _, _) in enumerate(resolved):
            for pi, func in enumerate(suite):
                name = func.id.rsplit("-", 1)[0]
                for run_idx in range(runs):
                    tasks.append(
                        (label, spec, name, func.dim, run_idx, seed, params,
                         gen_history, window_size)
                    )
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_eval_one, tasks, chunksize=4))
        k = 0
        for mi, (spec, label, _, _) in enumerate(resolved):
            for pi, func in enumerate(suite):
                for run_idx in range(runs):
                    err, evals = outcomes[k]
                    k += 1
                    errors[mi, pi, run_idx] = err
                    rows.append((label, func.id, func.dim, run_idx, err, evals))
    else:
        for mi, (spec, label, policy, dim_max) in enumerate(resolved):
            for pi, func in enumerate(suite):
                for run_idx in range(runs):
                    rng = np.random.default_rng(
                        derive_seed(seed, "eval", label, func.id, str(run_idx))
                    )
                    err, evals = run_policy(
                        func, params, policy, rng,
                        dim_max=dim_max, gen_history=gen_history,
                        window_size=window_size,
                    )
                    errors[mi, pi, run_idx] = err
                    rows.append((label, func.id, func.dim, run_idx, err, evals))

    summary = {}
    for mi, label in enumerate(methods):
        for pi, pid in enumerate(problems):
            summary[(label, pid)] = (
                float(errors[mi, pi].mean()),
                float(errors[mi, pi].std(ddof=1)) if runs > 1 else 0.0,
            )
    mean_ranks_arr = rank(errors.mean(axis=2))
    mean_ranks = {label: float(mean_ranks_arr[mi]) for mi, label in enumerate(methods)}
    return EvalResults(
        methods=methods, problems=problems, rows=rows,
        summary=summary, mean_ranks=mean_ranks,
    )
