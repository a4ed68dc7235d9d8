import { ApiClient } from './api.js';
import { Stepper } from './stepper.js';

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get('service') ?? 'http://127.0.0.1:8000';

const root = document.getElementById('app');
if (!root) throw new Error('missing #app container');

const stepper = new Stepper(root, new ApiClient(baseUrl));
const sessionId = params.get('session');
if (sessionId) {
  void stepper.loadSession(sessionId);
} else {
  stepper.render();
}
