import numpy as np
import pytest


def test_health_check(client):
    response = client.get('/health')
    assert response.status_code == 200
    payload = response.get_json()
    assert payload['status'] == 'healthy'
    assert payload['features']['fit'] is True


def test_status_lists_defaults_and_models(client):
    payload = client.get('/api/status').get_json()
    assert payload['defaults']['l_star'] == 25
    assert payload['defaults']['c1'] == 0.01 * 25 ** 2
    assert set(payload['models']) == {'M1', 'M2', 'M3', 'M4', 'M5', 'M6'}
    assert '/api/fit' in payload['endpoints']


def test_ping(client):
    assert client.get('/api/ping').get_json()['message'] == 'pong'


def test_simulate_endpoint(client):
    response = client.post('/api/simulate', json={'model': 'M2', 'n': 12, 'L': 40, 'seed': 1})
    assert response.status_code == 200
    payload = response.get_json()
    assert np.asarray(payload['W']).shape == (12, 40)
    assert len(payload['y']) == 12
    assert np.allclose(np.asarray(payload['X']) + np.asarray(payload['U']), np.asarray(payload['W']))


def test_simulate_rejects_unknown_model(client):
    response = client.post('/api/simulate', json={'model': 'M9'})
    assert response.status_code == 400
    assert response.get_json()['status'] == 'error'


def test_rank_requires_body(client):
    response = client.post('/api/rank', data='', content_type='application/json')
    assert response.status_code == 400


def test_rank_rejects_ragged_curves(client):
    response = client.post('/api/rank', json={'grid': [0.25, 0.75], 'curves': [[1.0, 2.0], [1.0]]})
    assert response.status_code == 400


def _sample(client, n=40, L=50):
    return client.post('/api/simulate', json={'model': 'M1', 'error': 'none', 'n': n, 'L': L,
                                              'seed': 6}).get_json()


def test_fit_spectral_truncation(client):
    sample = _sample(client)
    response = client.post('/api/fit', json={'grid': sample['grid'], 'curves': sample['W'],
                                             'y': sample['y'], 'fit_method': 'st', 'k': 1})
    assert response.status_code == 200
    payload = response.get_json()
    assert payload['k'] == 1
    assert payload['fit']['type'] == 'scalar'
    assert len(payload['fit']['beta']) == 50


def test_fit_with_known_rank(client):
    sample = _sample(client)
    response = client.post('/api/fit', json={'grid': sample['grid'], 'curves': sample['W'],
                                             'y': sample['y'], 'method': 'known', 'known_rank': 3})
    assert response.status_code == 200
    assert response.get_json()['rank'] == 3


def test_fit_needs_exactly_one_response(client):
    sample = _sample(client, n=10)
    response = client.post('/api/fit', json={'grid': sample['grid'], 'curves': sample['W']})
    assert response.status_code == 400


def test_fit_response_length_mismatch(client):
    sample = _sample(client, n=10)
    response = client.post('/api/fit', json={'grid': sample['grid'], 'curves': sample['W'],
                                             'y': sample['y'][:5], 'fit_method': 'st', 'k': 1})
    assert response.status_code == 400


@pytest.mark.parametrize("name, debug, testing", [
    ("development", True, False),
    ("production", False, False),
    ("testing", False, True),
])
def test_app_factory_selects_configuration(name, debug, testing):
    from main import create_app
    app = create_app(name)
    assert app.config['DEBUG'] is debug
    assert app.config['TESTING'] is testing


def test_app_factory_reads_flask_env(monkeypatch):
    from main import create_app
    monkeypatch.setenv('FLASK_ENV', 'production')
    assert create_app().config['DEBUG'] is False
    monkeypatch.setenv('FLASK_ENV', 'unknown')
    assert create_app().config['DEBUG'] is True


def test_rank_on_short_grid_uses_full_grid(client):
    sample = _sample(client, n=39, L=20)
    response = client.post('/api/rank', json={'grid': sample['grid'], 'curves': sample['W'], 'B': 10})
    assert response.status_code == 200
    payload = response.get_json()
    assert payload['l_star'] == 20
    assert payload['B'] == 1
    assert payload['c1'] == pytest.approx(4.0)
    assert payload['rank'] == 3
