import pytest
from httpx import ASGITransport, AsyncClient

from app.core.config import settings
from app.main import app

PREFIX = settings.API_V1_PREFIX


@pytest.fixture
async def client():
    async with AsyncClient(transport=ASGITransport(app=app), base_url="http://test") as client:
        yield client


async def test_root(client):
    response = await client.get("/")
    assert response.status_code == 200
    assert response.json()["version"] == settings.VERSION


async def test_health(client):
    response = await client.get(f"{PREFIX}/health/")
    assert response.status_code == 200
    assert response.json() == {"status": "healthy", "default_preset": settings.DEFAULT_PRESET}


async def test_presets(client):
    response = await client.get(f"{PREFIX}/simulations/presets")
    assert response.status_code == 200
    assert {"paper", "quick"} <= set(response.json())


async def test_simulation(client):
    response = await client.post(
        f"{PREFIX}/simulations/",
        json={"preset": "quick", "seed": 3, "snr_db": 30.0, "methods": ["omp", "turbo_cs"]},
    )
    assert response.status_code == 200
    body = response.json()
    assert body["seed"] == 3
    assert [m["method"] for m in body["methods"]] == ["omp", "turbo_cs"]
    assert len(body["scene"]["targets"]) == 3
    assert body["methods"][1]["channel_r"]["shape"] == [8, 16, 16]
    assert len(body["methods"][1]["gains_c"]["imag"]) == 26


async def test_unknown_preset(client):
    response = await client.post(f"{PREFIX}/simulations/", json={"preset": "huge"})
    assert response.status_code == 400
    assert "unknown preset" in response.json()["detail"]


async def test_invalid_override(client):
    response = await client.post(
        f"{PREFIX}/simulations/",
        json={"preset": "quick", "methods": ["omp"], "overrides": {"scene": {"num_ghosts": 2}}},
    )
    assert response.status_code == 400


async def test_unknown_field(client):
    response = await client.post(f"{PREFIX}/simulations/", json={"preset": "quick", "power": 1})
    assert response.status_code == 422


async def test_unknown_method(client):
    response = await client.post(f"{PREFIX}/simulations/", json={"methods": ["music"]})
    assert response.status_code == 422
