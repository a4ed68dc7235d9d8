import { describe, expect, it } from 'vitest';

import { drawModelPreview, PreviewError } from '../src/preview.js';
import type { ModelJson } from '../src/types.js';

function model(partial: Partial<ModelJson> = {}): ModelJson {
  return {
    system_name: 'Shop',
    actors: [],
    use_cases: [],
    associations: [],
    relations: [],
    ...partial,
  };
}

const spans: [number, number][] = [];

describe('drawModelPreview', () => {
  it('draws only the labeled boundary for an empty model', () => {
    const svg = drawModelPreview(model());
    expect(svg.querySelectorAll('.system-boundary')).toHaveLength(1);
    expect(svg.querySelector('.system-name')?.textContent).toBe('Shop');
    expect(svg.querySelectorAll('.actor-figure')).toHaveLength(0);
    expect(svg.querySelectorAll('.usecase-shape')).toHaveLength(0);
    expect(svg.querySelectorAll('.association-line')).toHaveLength(0);
  });

  it('draws one figure, one ellipse, one line for the minimal model', () => {
    const svg = drawModelPreview(
      model({
        actors: [{ id: 'A1', name: 'Customer', kind: 'human', source_spans: spans }],
        use_cases: [{ id: 'UC1', title: 'Place Order', actor_ids: ['A1'], source_spans: spans }],
        associations: [{ actor_id: 'A1', usecase_id: 'UC1' }],
      }),
    );
    expect(svg.querySelectorAll('.actor-figure')).toHaveLength(1);
    expect(svg.querySelectorAll('.usecase-shape')).toHaveLength(1);
    expect(svg.querySelectorAll('.association-line')).toHaveLength(1);
  });

  it('keeps three actors in model order down the left column', () => {
    const svg = drawModelPreview(
      model({
        actors: [
          { id: 'A1', name: 'Zoe', kind: 'human', source_spans: spans },
          { id: 'A2', name: 'Adam', kind: 'human', source_spans: spans },
          { id: 'A3', name: 'Mia', kind: 'hardware', source_spans: spans },
        ],
      }),
    );
    const labels = [...svg.querySelectorAll('.actor-label')].map((n) => n.textContent);
    expect(labels).toEqual(['Zoe', 'Adam', 'Mia']);
    const ys = [...svg.querySelectorAll('.actor-figure')].map((n) =>
      Number(/translate\(\d+, (\d+)\)/.exec(n.getAttribute('transform') ?? '')?.[1]),
    );
    expect(ys).toEqual([...ys].sort((a, b) => a - b));
  });

  it('draws include/extend as dashed labeled arrows', () => {
    const svg = drawModelPreview(
      model({
        actors: [{ id: 'A1', name: 'User', kind: 'human', source_spans: spans }],
        use_cases: [
          { id: 'UC1', title: 'Pay', actor_ids: ['A1'], source_spans: spans },
          { id: 'UC2', title: 'Validate Card', actor_ids: [], source_spans: spans },
        ],
        associations: [{ actor_id: 'A1', usecase_id: 'UC1' }],
        relations: [{ from_id: 'UC1', to_id: 'UC2', kind: 'include' }],
      }),
    );
    const arrow = svg.querySelector('.relation-arrow');
    expect(arrow?.getAttribute('stroke-dasharray')).toBeTruthy();
    expect(svg.querySelector('.relation-label')?.textContent).toBe('<<include>>');
  });

  it('throws on a model with dangling references, drawing nothing', () => {
    expect(() =>
      drawModelPreview(model({ associations: [{ actor_id: 'A1', usecase_id: 'UC1' }] })),
    ).toThrow(PreviewError);
  });

  it('is a pure function: identical input yields identical SVG markup', () => {
    const input = model({
      actors: [{ id: 'A1', name: 'User', kind: 'human', source_spans: spans }],
      use_cases: [{ id: 'UC1', title: 'Pay', actor_ids: ['A1'], source_spans: spans }],
      associations: [{ actor_id: 'A1', usecase_id: 'UC1' }],
    });
    expect(drawModelPreview(input).outerHTML).toBe(drawModelPreview(input).outerHTML);
  });
});
