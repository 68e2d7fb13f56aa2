import { App } from './app.js';

function boot(): void {
  const root = document.getElementById('app');
  if (root) {
    new App(root).mount();
  }
}

if (document.readyState === 'loading') {
  document.addEventListener('DOMContentLoaded', boot);
} else {
  boot();
}
