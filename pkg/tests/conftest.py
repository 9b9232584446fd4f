import numpy as np
import pytest
from hypothesis import HealthCheck, settings

import qsdlab
from qsdlab import models

settings.register_profile(
    "suite", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("suite")


@pytest.fixture(scope="session")
def golden():
    return models.golden_chain()


@pytest.fixture(scope="session")
def golden_eigen(golden):
    return qsdlab.solve_eigentriple(golden, tol=1e-13)


@pytest.fixture(scope="session")
def golden_exh():
    """Whole space as the single window on the two-state chain."""
    return qsdlab.Exhaustion(sets=(np.arange(1), np.arange(2)),
                             survival=0, coupling=1, mixing=1)


@pytest.fixture(scope="session")
def ladder20():
    """20-site ladder, unit birth/death, small catastrophe rate below site 13
    and a strong one above -- certifiable assumptions on the truncation."""
    c = np.where(np.arange(1, 21) < 13, 0.05, 2.5)
    params = models.BDCParams(b=np.ones(20), d=np.ones(20), c=c)
    return models.build_bdc(params)


@pytest.fixture(scope="session")
def ladder20_exh():
    return models.prefix_exhaustion([3, 12, 16, 20], survival=0, coupling=1,
                                    mixing=2)


@pytest.fixture(scope="session")
def ladder20_constants(ladder20, ladder20_exh):
    gen, exh = ladder20, ladder20_exh
    eigen = qsdlab.solve_eigentriple(gen, tol=1e-13)
    grid = qsdlab.default_t_grid(0.5, 16.0, points_per_decade=16)
    mus = [qsdlab.point_mass(i, gen.n_states).w for i in range(gen.n_states)]
    retention = qsdlab.verify_mass_retention(gen, exh, mus, grid)
    certs = {"mix": qsdlab.check_mix(gen, exh, int(retention.chosen["n"]), 2.0)}
    alpha_c = np.asarray(certs["mix"].witness["alpha_c"], dtype=float)
    certs["dc"] = qsdlab.check_dc(gen, exh, alpha_c, t_floor=2.0)
    certs["et"] = qsdlab.check_et(gen, exh, qsdlab.max_escape_rate(gen, exh))
    certs["sv"] = qsdlab.check_sv(gen, exh)
    certs["lj"] = qsdlab.lj_certificate(gen)
    return qsdlab.derive_coupling_constants(gen, exh, certs, eigen=eigen,
                                            retention=retention)


@pytest.fixture(scope="session")
def golden_constants(golden, golden_exh):
    gen, exh = golden, golden_exh
    eigen = qsdlab.solve_eigentriple(gen, tol=1e-13)
    grid = qsdlab.default_t_grid(0.25, 8.0, points_per_decade=16)
    mus = [qsdlab.point_mass(i, 2).w for i in range(2)]
    retention = qsdlab.verify_mass_retention(gen, exh, mus, grid)
    certs = {"mix": qsdlab.check_mix(gen, exh, int(retention.chosen["n"]), 1.0)}
    alpha_c = np.asarray(certs["mix"].witness["alpha_c"], dtype=float)
    certs["dc"] = qsdlab.check_dc(gen, exh, alpha_c, t_floor=1.0)
    certs["et"] = qsdlab.check_et(gen, exh, qsdlab.max_escape_rate(gen, exh))
    certs["sv"] = qsdlab.check_sv(gen, exh)
    certs["lj"] = qsdlab.lj_certificate(gen)
    return qsdlab.derive_coupling_constants(gen, exh, certs, eigen=eigen,
                                            retention=retention)
