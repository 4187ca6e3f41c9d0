import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "ci",
    derandomize=True,
    max_examples=50,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def small_community():
    """A small labeled community shared by unit tests."""
    from botcensus.synth import SynthConfig, generate_community

    return generate_community(
        SynthConfig(n_users=240, bot_fraction=0.5, seed=7, delta=1.0,
                    homophily=0.7, mean_degree=6.0)
    )


@pytest.fixture(scope="session")
def tiny_pipeline_config():
    """Fast configuration for pipeline-level unit tests."""
    from botcensus.config import PipelineConfig
    from botcensus.graph import DistillConfig, GraphConfig
    from botcensus.tabular import BoostConfig, ForestConfig
    from botcensus.text import TextConfig

    return PipelineConfig(
        forest=ForestConfig(n_trees=8, max_depth=4),
        adaboost=BoostConfig(rounds=8),
        text=TextConfig(learning_rate=0.1, epochs=8),
        graph=GraphConfig(learning_rate=5e-3, batch_size=10_000, epochs=12,
                          hidden_dim=12, dropout=0.1),
        distill=DistillConfig(learning_rate=0.02, batch_size=2048, epochs=15),
    ).with_seed(5)


@pytest.fixture(scope="session")
def tiny_bundle(small_community, tiny_pipeline_config):
    from botcensus.pipeline import train_bundle

    store, edges, _labels = small_community
    return train_bundle(store, edges, tiny_pipeline_config)


def rng_record(rng: np.random.Generator, uid: str):
    """Random but invariant-respecting UserRecord for property tests."""
    from datetime import timedelta

    from botcensus.ingest import UserRecord
    from botcensus.synth import SNAPSHOT_AT

    chars = "abcXYZ019 #éж中"
    def text(n):
        return "".join(rng.choice(list(chars)) for _ in range(int(rng.integers(0, n))))

    return UserRecord(
        id=uid,
        created_at=SNAPSHOT_AT - timedelta(days=float(rng.uniform(0, 4000))),
        snapshot_at=SNAPSHOT_AT,
        status_count=int(rng.integers(0, 10_000)),
        follower_count=int(rng.integers(0, 10_000)),
        friend_count=int(rng.integers(0, 10_000)),
        favorite_count=int(rng.integers(0, 10_000)),
        listed_count=int(rng.integers(0, 100)),
        default_profile=bool(rng.random() < 0.5),
        profile_use_background_image=bool(rng.random() < 0.5),
        verified=bool(rng.random() < 0.5),
        protected=bool(rng.random() < 0.5),
        has_location=bool(rng.random() < 0.5),
        screen_name=text(12),
        username=text(12),
        description=text(40),
        tweets=tuple(text(60) for _ in range(int(rng.integers(0, 25)))),
        label=("bot" if rng.random() < 0.5 else "human") if rng.random() < 0.8 else None,
    )
