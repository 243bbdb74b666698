import pytest

from halc.world import CorpusSpec, demo_scene, generate_corpus


@pytest.fixture(scope="session")
def demo():
    return demo_scene()


@pytest.fixture(scope="session")
def small_trap_corpus():
    spec = CorpusSpec(scene_count=20, trap_fraction=0.5, clauses=3, trap_clauses=(1, 2))
    return generate_corpus(13, 20, spec)


@pytest.fixture(scope="session")
def small_clean_corpus():
    spec = CorpusSpec(scene_count=10, trap_fraction=0.0, clauses=2)
    return generate_corpus(17, 10, spec)
