import { defineConfig } from 'vitest/config';

export default defineConfig({
  test: {
    environment: 'happy-dom',
    globalSetup: ['tests/service-setup.ts'],
    testTimeout: 60000,
    hookTimeout: 60000,
  },
});
