"""Round pipeline: local training, cooperation analysis, attacks, aggregation.

Each round runs, in order:

1. every client steps the shared network for the configured horizon and
   trains its DQN online (one worker per client is allowed; the env itself
   advances in lockstep),
2. every client scores the model it last received (KL probe, action
   agreement, parameter deviation) and declares a cooperation level,
   2b. meme-model clients let the meme absorb fresh local knowledge before
   uploading (full copy at cooperation 1, gradient distillation between),
3. active attackers transform their uploads (the update part of them),
4. the server derives per-client trust from update correlation, combines it
   with declared intent into aggregation weights, and applies the strategy's
   server-side tuning (plain averaging, per-cluster averaging, or per-client
   cloud models),
5. personalized models go back to the clients,
6. each client applies its client-side tuning gated by its own declared
   level (merge masks, interpolation, adaptation steps, distillation).

All randomness is drawn from streams keyed by (master seed, purpose, client,
round), so results are bit-identical regardless of worker count or schedule.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import coop as coop_mod
from .attacks import AttackKind, AttackSpec, corrupt_transition, free_ride, poison_model
from .cellnet import OBS_DIM, CellNetwork, SleepMode
from .config import ScenarioConfig, resolved_dict
from .coop import CoopConfig
from .dqn import DqnAgent, ReplayBuffer, Transition, epsilon_at, select_action, td_targets
from .nn import Mlp, ParamVector, cosine_similarity, weighted_mean
from .strategies import (
    StrategyKind,
    cluster_assign,
    decoupled_merge,
    distill_step,
    interpolate_models,
    local_adaptation,
    map_cooperation,
)

N_ACTIONS = len(SleepMode)

# rng stream purposes; streams are keyed (seed, purpose[, client][, round])
_TOPOLOGY = 0
_INIT = 1
_ENV = 2
_AGENT = 3
_POISON = 4
_SERVER = 5
_DISTILL = 6
_ADAPT = 7


def derive_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Deterministic generator for a (seed, purpose, client, round) key."""
    return np.random.default_rng(np.random.SeedSequence((int(master_seed),) + tuple(int(k) for k in key)))


@dataclass
class ClientState:
    """One SBS participant in the federation."""

    client_id: int
    agent: DqnAgent
    meme: Mlp
    buffer: ReplayBuffer
    reference: Mlp
    coop_level: float = 1.0
    attack_role: AttackKind = AttackKind.NONE


@dataclass(frozen=True)
class RoundRecord:
    """Per-round metrics row; the CSV schema mirrors these fields."""

    round_index: int
    system_throughput_bps: float
    energy_efficiency: float
    risk_level: float
    cooperation_level: float
    mean_benign_reward: float
    attackers_active: int
    client_coop: tuple[float, ...]
    client_kl: tuple[float, ...]
    client_reward: tuple[float, ...]
    cluster_assignment: tuple[int, ...] = ()


@dataclass(frozen=True)
class ExperimentPlan:
    """Validated run description derived from a scenario config."""

    config: ScenarioConfig
    attack_spec: AttackSpec
    strategy: StrategyKind

    @classmethod
    def from_config(cls, config: ScenarioConfig) -> "ExperimentPlan":
        n = config.env.n_sbs
        if n < 2:
            raise ValueError(f"experiments need at least 2 clients, got {n}")
        attack = config.attack
        pool = max(attack.schedule) if attack.schedule else attack.attackers
        if pool > n:
            raise ValueError(f"attacker pool {pool} exceeds {n} clients")
        kind = attack.attack_kind if pool > 0 else AttackKind.NONE
        spec = AttackSpec(
            kind=kind,
            attacker_ids=tuple(range(n - pool, n)),
            gamma=attack.gamma,
            flip_probability=attack.flip_probability,
            activation_round=attack.activation_round,
            schedule=attack.schedule,
            rounds_per_stage=attack.rounds_per_stage,
        )
        return cls(config=config, attack_spec=spec, strategy=config.strategy.strategy_kind)

    @property
    def n_clients(self) -> int:
        return self.config.env.n_sbs

    @property
    def rounds(self) -> int:
        return self.config.run.rounds

    @property
    def seed(self) -> int:
        return self.config.run.seed


@dataclass
class ExperimentResult:
    plan: ExperimentPlan
    records: list[RoundRecord]
    clients: list[ClientState]
    calibration: dict | None
    converged: dict[str, float]
    debug_uploads: list[list[ParamVector]] = field(default_factory=list)

    @property
    def final_params(self) -> list[ParamVector]:
        return [c.agent.q_net.get_params() for c in self.clients]


class Experiment:
    """Owns one experiment's clients, environment, and round loop."""

    def __init__(self, config: ScenarioConfig, keep_uploads: bool = False):
        self.plan = ExperimentPlan.from_config(config)
        self.cfg = config
        self.keep_uploads = keep_uploads
        self.workers = config.run.workers
        self._pool = ThreadPoolExecutor(max_workers=self.workers) if self.workers > 1 else None
        self.calibration: dict | None = None
        self.coop_cfg: CoopConfig | None = None
        self._is_meme = self.plan.strategy is StrategyKind.MEME_DISTILLATION
        self._uses_choice = (
            config.coop.mode == "choice" and self.plan.strategy is not StrategyKind.FEDAVG
        )

    # -- setup ---------------------------------------------------------------

    def _map(self, fn, items):
        if self._pool is None:
            return [fn(x) for x in items]
        return list(self._pool.map(fn, items))

    def _build_world(self) -> tuple[CellNetwork, list[ClientState]]:
        cfg = self.cfg
        seed = self.plan.seed
        env = CellNetwork(cfg.env, derive_rng(seed, _TOPOLOGY))
        clients = []
        for i in range(self.plan.n_clients):
            net = Mlp(
                [OBS_DIM, *cfg.dqn.hidden_sizes, N_ACTIONS],
                cfg.dqn.activation,
                rng=derive_rng(seed, _INIT, i),
            )
            agent = DqnAgent(
                net,
                gamma=cfg.dqn.gamma,
                learning_rate=cfg.dqn.learning_rate,
                target_sync_period=cfg.dqn.target_sync_period,
            )
            role = (
                self.plan.attack_spec.kind
                if i in self.plan.attack_spec.attacker_ids
                else AttackKind.NONE
            )
            clients.append(
                ClientState(
                    client_id=i,
                    agent=agent,
                    meme=net.copy(),
                    buffer=ReplayBuffer(cfg.dqn.buffer_capacity),
                    reference=net.copy(),
                    attack_role=role,
                )
            )
        return env, clients

    def _resolve_coop(self, calibration: dict | None) -> CoopConfig:
        section = self.cfg.coop

        def pick(value, auto_key):
            if isinstance(value, str):
                if calibration is None:
                    raise ValueError(f"coop.{auto_key} is 'auto' but no calibration ran")
                return calibration[auto_key]
            return float(value)

        return CoopConfig(
            kl_threshold=pick(section.kl_threshold, "kl_threshold"),
            kl_cap=pick(section.kl_cap, "kl_cap"),
            deviation_cap=pick(section.deviation_cap, "deviation_cap"),
            w_similarity=section.w_similarity,
            w_validation=section.w_validation,
            w_deviation=section.w_deviation,
            probe_batch_size=section.probe_batch_size,
            temperature=section.temperature,
            window_rounds=section.window_rounds,
        )

    # -- phase 1: shared environment rollout + local training ----------------

    def _local_phase(
        self,
        env: CellNetwork,
        clients: list[ClientState],
        round_index: int,
        active_attackers: tuple[int, ...],
    ) -> dict:
        cfg = self.cfg
        seed = self.plan.seed
        steps = cfg.run.env_steps_per_round
        total_steps = self.plan.rounds * steps
        env_rng = derive_rng(seed, _ENV, round_index)
        agent_rngs = [derive_rng(seed, _AGENT, c.client_id, round_index) for c in clients]
        poisoning = {
            c.client_id: derive_rng(seed, _POISON, c.client_id, round_index)
            for c in clients
            if c.attack_role is AttackKind.DATA_POISON and c.client_id in active_attackers
        }
        obs = env.observe_all()
        reward_sums = np.zeros(len(clients))
        tp_sum = 0.0
        bits_total = 0.0
        energy_total = 0.0
        for t in range(steps):
            epsilon = epsilon_at(
                round_index * steps + t,
                total_steps,
                cfg.dqn.epsilon_start,
                cfg.dqn.epsilon_end,
                cfg.dqn.epsilon_fraction,
            )
            actions = np.empty(len(clients), dtype=np.int64)
            for i, client in enumerate(clients):
                client.agent.epsilon = epsilon
                actions[i] = select_action(client.agent, obs[i], agent_rngs[i])
            outcome = env.step(actions, env_rng)
            for i, client in enumerate(clients):
                transition = Transition(
                    obs[i], int(actions[i]), float(outcome.rewards[i]), outcome.observations[i]
                )
                rng_p = poisoning.get(client.client_id)
                if rng_p is not None:
                    transition = corrupt_transition(
                        transition, self.plan.attack_spec.flip_probability, N_ACTIONS, rng_p
                    )
                client.buffer.push(transition)
                if t % cfg.dqn.train_every == 0:
                    client.agent.train_step(client.buffer, cfg.dqn.batch_size, agent_rngs[i])
            obs = outcome.observations
            reward_sums += outcome.rewards
            tp_sum += outcome.system_throughput_bps
            bits_total += outcome.system_throughput_bps * cfg.env.step_seconds
            energy_total += float(outcome.sbs_energy_j.sum())
        return {
            "mean_rewards": reward_sums / steps,
            "mean_throughput": tp_sum / steps,
            "efficiency": bits_total / energy_total if energy_total > 0 else 0.0,
        }

    # -- phase 2: cooperation analysis ----------------------------------------

    def _analyze(self, clients: list[ClientState]) -> tuple[np.ndarray, np.ndarray]:
        assert self.coop_cfg is not None
        cc = self.coop_cfg

        def one(client: ClientState) -> tuple[float, float]:
            states = client.buffer.recent_states(cc.probe_batch_size)
            kl = coop_mod.kl_probe(client.agent.q_net, client.reference, states, cc.temperature)
            dev = coop_mod.deviation_score(client.agent.q_net, client.reference, cc.deviation_cap)
            val = coop_mod.validation_score(client.agent.q_net, client.reference, states)
            return kl, coop_mod.cooperation_level(kl, dev, val, cc)

        results = self._map(one, clients)
        kls = np.array([r[0] for r in results])
        levels = np.array([r[1] for r in results])
        return kls, levels

    # -- calibration -----------------------------------------------------------

    def _calibrate(self) -> dict:
        """Replay round 0 attack-free and size the KL/deviation scales from it.

        Threshold = 90th percentile of the round-1 probe KLs, cap = 4x that,
        deviation cap = 4x the 90th percentile parameter distance.
        """
        env, clients = self._build_world()
        self._local_phase(env, clients, 0, active_attackers=())
        section = self.cfg.coop
        kls, dists = [], []
        for client in clients:
            states = client.buffer.recent_states(section.probe_batch_size)
            kls.append(
                coop_mod.kl_probe(client.agent.q_net, client.reference, states, section.temperature)
            )
            dists.append(
                float(
                    np.linalg.norm(
                        client.agent.q_net.get_params().values
                        - client.reference.get_params().values
                    )
                )
            )
        kl90 = max(float(np.percentile(kls, 90)), 1e-9)
        dist90 = max(float(np.percentile(dists, 90)), 1e-9)
        return {
            "kl_threshold": kl90,
            "kl_cap": 4.0 * kl90,
            "deviation_cap": 4.0 * dist90,
            "round1_kl": [float(k) for k in kls],
            "round1_distance": [float(d) for d in dists],
        }

    # -- meme distillation halves ----------------------------------------------

    def _distill_half(
        self, client: ClientState, level: float, direction: str, rng: np.random.Generator
    ) -> None:
        """One half of the mutual distillation: full copy at level 1, gradient
        steps below it. Both halves of a round share one rng stream."""
        cfg = self.cfg
        if level >= 1.0:
            if direction == "to_meme":
                client.meme.set_params(client.agent.q_net.get_params())
            else:
                client.agent.q_net.set_params(client.meme.get_params())
            return
        for _ in range(cfg.strategy.distill_steps):
            if len(client.buffer) < cfg.dqn.batch_size:
                break
            idx = client.buffer.sample_indices(cfg.dqn.batch_size, rng)
            states, actions, rewards, next_states, terminals = client.buffer.batch(idx)
            targets = td_targets(
                rewards, next_states, terminals, client.agent.target_net, cfg.dqn.gamma
            )
            distill_step(
                client.agent.q_net,
                client.meme,
                states,
                actions,
                targets,
                distill_weight=level,
                temperature=cfg.strategy.distill_temperature,
                learning_rate=cfg.dqn.learning_rate,
                direction=direction,
            )

    # -- server side -------------------------------------------------------------

    def _server_aggregate(
        self,
        uploads: list[ParamVector],
        deltas: list[ParamVector],
        weights: np.ndarray,
        levels: np.ndarray,
        round_index: int,
    ) -> tuple[list[ParamVector | None], tuple[int, ...]]:
        """Returns (per-client personalized models, cluster labels if any)."""
        n = len(uploads)
        strategy = self.plan.strategy
        if float(weights.sum()) == 0.0:
            return [None] * n, ()
        if strategy in (StrategyKind.CLUSTERING, StrategyKind.MEME_DISTILLATION):
            # exceptional participants end up in their own clusters and thus
            # drop out of everyone else's aggregate
            c_server = float(np.mean(weights))
            k = map_cooperation(c_server, strategy, n).clusters
            labels = cluster_assign(deltas, k, derive_rng(self.plan.seed, _SERVER, round_index))
            sent: list[ParamVector | None] = [None] * n
            for j in range(k):
                members = [i for i in range(n) if labels[i] == j]
                if not members:
                    continue
                w = [float(weights[i]) for i in members]
                if sum(w) == 0.0:
                    w = [1.0] * len(members)
                model = weighted_mean([(uploads[i], wi) for i, wi in zip(members, w)])
                for i in members:
                    sent[i] = model
            return sent, tuple(int(x) for x in labels)
        if strategy is StrategyKind.MULTI_TASK:
            base = np.zeros((n, n))
            for i in range(n):
                base[i] = levels[i] / n
                base[i, i] += 1.0 - levels[i]
            masked = base * weights[None, :]
            sent = []
            stacked = np.stack([u.values for u in uploads])
            for i in range(n):
                row_sum = masked[i].sum()
                if row_sum == 0.0:
                    sent.append(uploads[i].copy())
                else:
                    row = masked[i] / row_sum
                    sent.append(ParamVector(row @ stacked, uploads[i].layout))
            return sent, ()
        global_model = weighted_mean([(uploads[i], float(weights[i])) for i in range(n)])
        return [global_model] * n, ()

    # -- client-side tuning --------------------------------------------------------

    def _apply_client_tuning(
        self,
        client: ClientState,
        sent: ParamVector | None,
        level: float,
        round_index: int,
        distill_rng: np.random.Generator | None = None,
    ) -> None:
        if sent is None:
            return
        strategy = self.plan.strategy
        cfg = self.cfg
        received = Mlp(client.agent.q_net.layer_sizes, client.agent.q_net.activation)
        received.set_params(sent)
        # the received model is next round's probe target whether or not any
        # of it is adopted
        client.reference = received
        if strategy is StrategyKind.FEDAVG:
            client.agent.q_net.set_params(sent)
        elif level == 0.0:
            return
        elif strategy in (StrategyKind.CLUSTERING, StrategyKind.MULTI_TASK):
            client.agent.q_net.set_params(sent)
        elif strategy is StrategyKind.PARAM_DECOUPLING:
            mask = map_cooperation(
                level, strategy, self.plan.n_clients, n_layers=client.agent.q_net.n_layers
            ).public_mask
            client.agent.q_net.set_params(
                decoupled_merge(client.agent.q_net.get_params(), sent, mask)
            )
        elif strategy is StrategyKind.INTERPOLATION:
            client.agent.q_net.set_params(
                interpolate_models(client.agent.q_net.get_params(), sent, level)
            )
        elif strategy is StrategyKind.LOCAL_ADAPTATION:
            iterations = map_cooperation(
                level,
                strategy,
                self.plan.n_clients,
                adapt_max_iterations=cfg.strategy.adapt_max_iterations,
            ).adapt_iterations
            adapted = local_adaptation(
                received,
                client.buffer,
                iterations,
                gamma=cfg.dqn.gamma,
                learning_rate=cfg.dqn.learning_rate,
                target_sync_period=cfg.dqn.target_sync_period,
                batch_size=cfg.dqn.batch_size,
                rng=derive_rng(self.plan.seed, _ADAPT, client.client_id, round_index),
            )
            client.agent.q_net.set_params(adapted.get_params())
        elif strategy is StrategyKind.MEME_DISTILLATION:
            client.meme.set_params(sent)
            if cfg.strategy.distill_direction in ("both", "to_local"):
                assert distill_rng is not None
                self._distill_half(client, level, "to_local", distill_rng)
        client.agent.sync_target()

    # -- round & experiment ------------------------------------------------------------

    def _run_round(
        self,
        env: CellNetwork,
        clients: list[ClientState],
        round_index: int,
        applied_log: list[np.ndarray],
        benign_ids: set[int],
        debug_uploads: list[list[ParamVector]] | None,
    ) -> RoundRecord:
        cfg = self.cfg
        n = len(clients)
        active = tuple(
            i for i in self.plan.attack_spec.active_attackers(round_index) if i < n
        )
        upload_nets = [c.meme if self._is_meme else c.agent.q_net for c in clients]
        refs = [net.get_params().copy() for net in upload_nets]
        kind = self.plan.attack_spec.kind

        phase1 = self._local_phase(env, clients, round_index, active)

        if self._uses_choice:
            # every participant, compromised or not, runs the same choice
            # analysis: the tampering sits in the update/data, not here
            kls, declared = self._analyze(clients)
        else:
            kls = np.zeros(n)
            declared = np.full(n, 1.0 if self.plan.strategy is StrategyKind.FEDAVG
                               else cfg.coop.fixed_level)
        for client, c in zip(clients, declared):
            client.coop_level = float(c)

        distill_rngs = {}
        if self._is_meme:
            distill_rngs = {
                c.client_id: derive_rng(self.plan.seed, _DISTILL, c.client_id, round_index)
                for c in clients
            }
            if cfg.strategy.distill_direction in ("both", "to_meme"):
                # the meme uploads a fresh snapshot of the local model; the
                # tunable (protective) half of the distillation is on the
                # receiving side, so sharing stays honest and recoverable
                for client in clients:
                    if client.coop_level > 0.0:
                        client.meme.set_params(client.agent.q_net.get_params())

        uploads: list[ParamVector] = []
        deltas: list[ParamVector] = []
        for i, client in enumerate(clients):
            raw = upload_nets[i].get_params()
            delta = ParamVector(raw.values - refs[i].values, raw.layout)
            if i in active and kind is AttackKind.MODEL_POISON:
                delta = poison_model(delta, self.plan.attack_spec.gamma)
            elif i in active and kind is AttackKind.FREE_RIDER:
                delta = free_ride(delta)
            uploads.append(ParamVector(refs[i].values + delta.values, raw.layout))
            deltas.append(delta)
        if debug_uploads is not None:
            debug_uploads.append([u.copy() for u in uploads])

        if self.plan.strategy is StrategyKind.FEDAVG:
            weights = np.ones(n)
        elif self._uses_choice:
            trust = self._trust_scores(deltas, round_index)
            weights = np.minimum(declared, trust)
        else:
            weights = np.full(n, cfg.coop.fixed_level)
        applied_log.append(weights.copy())

        sent, labels = self._server_aggregate(uploads, deltas, weights, declared, round_index)

        def tune(item):
            client, model = item
            self._apply_client_tuning(
                client, model, client.coop_level, round_index,
                distill_rng=distill_rngs.get(client.client_id),
            )

        self._map(tune, list(zip(clients, sent)))

        assert self.coop_cfg is not None or not self._uses_choice
        risk = (
            coop_mod.risk_level(kls, self.coop_cfg.kl_threshold) if self._uses_choice else 0.0
        )
        window = cfg.coop.window_rounds
        measured = coop_mod.measured_cooperation(applied_log, window)
        benign = sorted(benign_ids)
        mean_benign = float(np.mean([phase1["mean_rewards"][i] for i in benign])) if benign else 0.0
        return RoundRecord(
            round_index=round_index,
            system_throughput_bps=phase1["mean_throughput"],
            energy_efficiency=phase1["efficiency"],
            risk_level=risk,
            cooperation_level=measured,
            mean_benign_reward=mean_benign,
            attackers_active=len(active),
            client_coop=tuple(float(c) for c in declared),
            client_kl=tuple(float(k) for k in kls),
            client_reward=tuple(float(r) for r in phase1["mean_rewards"]),
            cluster_assignment=labels,
        )

    def _trust_scores(self, deltas: list[ParamVector], round_index: int) -> np.ndarray:
        """Correlation trust: 0 for empty updates, low for anti-correlated ones."""
        n = len(deltas)
        slope = self.cfg.coop.trust_slope
        norms = [float(np.linalg.norm(d.values)) for d in deltas]
        trust = np.ones(n)
        for i in range(n):
            if norms[i] == 0.0:
                trust[i] = 0.0
                continue
            cosines = [
                cosine_similarity(deltas[i], deltas[j]) for j in range(n) if j != i
            ]
            trust[i] = min(1.0, max(0.0, 1.0 + slope * float(np.mean(cosines))))
        return trust

    def run(self) -> ExperimentResult:
        if self._uses_choice and self.cfg.coop.needs_calibration:
            self.calibration = self._calibrate()
        if self._uses_choice:
            self.coop_cfg = self._resolve_coop(self.calibration)
        env, clients = self._build_world()
        records: list[RoundRecord] = []
        applied_log: list[np.ndarray] = []
        benign_ids = {
            c.client_id for c in clients if c.client_id not in self.plan.attack_spec.attacker_ids
        }
        debug: list[list[ParamVector]] | None = [] if self.keep_uploads else None
        for r in range(self.plan.rounds):
            records.append(
                self._run_round(env, clients, r, applied_log, benign_ids, debug)
            )
        if self._pool is not None:
            self._pool.shutdown()
        tail = max(1, int(np.ceil(0.2 * len(records))))
        converged = {
            "throughput_bps": float(np.mean([r.system_throughput_bps for r in records[-tail:]])),
            "energy_efficiency": float(np.mean([r.energy_efficiency for r in records[-tail:]])),
            "mean_benign_reward": float(np.mean([r.mean_benign_reward for r in records[-tail:]])),
        }
        return ExperimentResult(
            plan=self.plan,
            records=records,
            clients=clients,
            calibration=self.calibration,
            converged=converged,
            debug_uploads=debug or [],
        )


def run_experiment(
    config: ScenarioConfig,
    out_dir: str | Path | None = None,
    defaulted_keys: list[str] | None = None,
    keep_uploads: bool = False,
) -> ExperimentResult:
    """Run one experiment; optionally write metrics.csv + run_metadata.txt."""
    result = Experiment(config, keep_uploads=keep_uploads).run()
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_metrics_csv(out / "metrics.csv", result.records, result.plan.n_clients)
        write_metadata(out / "run_metadata.txt", config, defaulted_keys or [], result)
    return result


def run_independent(config: ScenarioConfig) -> list[ParamVector]:
    """Reference trainers: same seeds and environment, no cooperation at all."""
    exp = Experiment(config)
    env, clients = exp._build_world()
    for r in range(exp.plan.rounds):
        exp._local_phase(env, clients, r, active_attackers=())
    return [c.agent.q_net.get_params() for c in clients]


# -- output files ---------------------------------------------------------------


def metrics_header(n_clients: int) -> list[str]:
    head = [
        "round",
        "system_throughput_bps",
        "energy_efficiency_bits_per_joule",
        "risk_level",
        "cooperation_level",
        "mean_benign_reward",
        "attackers_active",
    ]
    for i in range(n_clients):
        head += [f"c_{i}", f"kl_{i}"]
    return head


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def write_metrics_csv(path: str | Path, records: list[RoundRecord], n_clients: int) -> None:
    lines = [",".join(metrics_header(n_clients))]
    for r in records:
        row = [
            str(r.round_index),
            _fmt(r.system_throughput_bps),
            _fmt(r.energy_efficiency),
            _fmt(r.risk_level),
            _fmt(r.cooperation_level),
            _fmt(r.mean_benign_reward),
            str(r.attackers_active),
        ]
        for i in range(n_clients):
            row += [_fmt(r.client_coop[i]), _fmt(r.client_kl[i])]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n", newline="\n")


def write_metadata(
    path: str | Path,
    config: ScenarioConfig,
    defaulted_keys: list[str],
    result: ExperimentResult,
) -> None:
    """Everything needed to re-run bit-identically: resolved config + seed."""
    payload = {
        "seed": config.run.seed,
        "resolved_config": resolved_dict(config),
        "defaulted_keys": list(defaulted_keys),
        "attacker_ids": list(result.plan.attack_spec.attacker_ids),
        "calibration": result.calibration,
        "converged": result.converged,
    }
    Path(path).write_text(yaml.safe_dump(payload, sort_keys=True), newline="\n")
