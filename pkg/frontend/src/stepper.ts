// The six-screen stepper. All state lives on the server: edits are queued in
// a local dirty buffer and submitted in one batch when the user confirms a
// gate, mirroring the per-stage validation workflow. A connection loss shows
// a retry banner and keeps the buffer; a 409 re-synchronizes to the server
// stage.

import { ApiClient, ApiError, ConnectionError } from './api.js';
import { drawModelPreview, PreviewError } from './preview.js';
import { StageTimers, type StageLabel } from './timers.js';
import type { ActorKind, EditJson, SessionView, StageName } from './types.js';

export const STEP_NAMES = [
  'requirements',
  'actors',
  'usecases',
  'model',
  'descriptions',
  'export',
] as const;

export type StepName = (typeof STEP_NAMES)[number];

const STAGE_MAX_STEP: Record<StageName, number> = {
  created: 1,
  actors_proposed: 1,
  actors_confirmed: 2,
  usecases_proposed: 2,
  usecases_confirmed: 3,
  model_proposed: 3,
  model_confirmed: 5,
  descriptions_done: 5,
};

const STEP_STAGE_LABEL: Partial<Record<number, StageLabel>> = {
  1: 'actors',
  2: 'usecases',
  3: 'model',
  4: 'descriptions',
};

interface Banner {
  code: string;
  message: string;
  retry?: () => Promise<void>;
}

export type DownloadFn = (filename: string, content: string, mime: string) => void;

export interface StepperOptions {
  now?: () => number;
  download?: DownloadFn;
}

function domDownload(filename: string, content: string, mime: string): void {
  const url = URL.createObjectURL(new Blob([content], { type: mime }));
  const anchor = document.createElement('a');
  anchor.href = url;
  anchor.download = filename;
  anchor.click();
  URL.revokeObjectURL(url);
}

export class Stepper {
  session: SessionView | null = null;
  buffer: EditJson[] = [];
  pending = false;
  banner: Banner | null = null;
  activeStep = 0;
  readonly timers: StageTimers;
  lastExportedPuml: string | null = null;
  private readonly downloadFn: DownloadFn;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
    options: StepperOptions = {},
  ) {
    this.timers = new StageTimers(options.now);
    this.downloadFn = options.download ?? domDownload;
  }

  // ---- state helpers -------------------------------------------------------

  private maxStep(): number {
    return this.session ? STAGE_MAX_STEP[this.session.stage] : 0;
  }

  private setSession(session: SessionView): void {
    this.session = session;
    this.activeStep = Math.min(
      Math.max(this.activeStep, this.maxStep() > 4 ? this.activeStep : this.maxStep()),
      this.maxStep(),
    );
  }

  private async guard(action: () => Promise<void>, retryable = true): Promise<void> {
    this.pending = true;
    this.banner = null;
    this.render();
    try {
      await action();
    } catch (error) {
      if (error instanceof ConnectionError) {
        // edits stay buffered; the user can retry the same action
        this.banner = {
          code: 'E-CONNECTION',
          message: error.message,
          retry: retryable ? () => this.guard(action, retryable) : undefined,
        };
      } else if (error instanceof ApiError) {
        this.banner = { code: error.code, message: error.message };
        if (error.status === 409) {
          await this.resync();
        }
      } else {
        throw error;
      }
    } finally {
      this.pending = false;
      this.render();
    }
  }

  async resync(): Promise<void> {
    if (!this.session) return;
    const fresh = await this.api.getSession(this.session.id);
    this.session = fresh;
    this.activeStep = Math.min(this.activeStep, this.maxStep());
    this.timers.resumeFromSession(fresh);
  }

  // ---- screen 1: create ----------------------------------------------------

  async createSession(title: string, text: string): Promise<void> {
    if (!text.trim()) {
      this.banner = { code: 'E-EMPTY-REQUIREMENTS', message: 'paste some requirements first' };
      this.render();
      return; // client-side validation: no request is sent
    }
    await this.guard(async () => {
      const session = await this.api.createSession(title, text);
      this.session = session;
      this.activeStep = 1;
    });
  }

  async loadSession(id: string): Promise<void> {
    await this.guard(async () => {
      const session = await this.api.getSession(id);
      this.session = session;
      this.activeStep = this.maxStep();
      this.timers.resumeFromSession(session);
    });
  }

  // ---- stage running and confirmation --------------------------------------

  async runCurrentStage(): Promise<void> {
    const session = this.session;
    if (!session) return;
    const label = STEP_STAGE_LABEL[this.activeStep];
    if (!label || label === 'descriptions') return;
    await this.guard(async () => {
      this.timers.start(label);
      this.setSession(await this.api.runStage(session.id, label));
      this.buffer = [];
    });
  }

  queueEdit(edit: EditJson): void {
    this.buffer.push(edit);
    this.render();
  }

  queueRemove(targetId: string): void {
    if (!this.session) return;
    this.buffer = this.buffer.filter((edit) => edit.target_id !== targetId);
    this.queueEdit({ stage: this.session.stage, kind: 'remove', target_id: targetId });
  }

  queueRename(targetId: string, name: string): void {
    if (!this.session) return;
    this.buffer = this.buffer.filter(
      (edit) => !(edit.kind === 'rename' && edit.target_id === targetId),
    );
    this.queueEdit({
      stage: this.session.stage,
      kind: 'rename',
      target_id: targetId,
      payload: { name },
    });
  }

  queueAddActor(name: string, kind: ActorKind): void {
    if (!this.session || !name.trim()) return;
    this.queueEdit({
      stage: this.session.stage,
      kind: 'add',
      payload: { type: 'actor', name, kind },
    });
  }

  queueAddUseCase(title: string, actorIds: string[]): void {
    if (!this.session || !title.trim()) return;
    this.queueEdit({
      stage: this.session.stage,
      kind: 'add',
      payload: { type: 'usecase', title, actor_ids: actorIds },
    });
  }

  queueRelink(targetId: string, actorIds: string[]): void {
    if (!this.session) return;
    this.buffer = this.buffer.filter(
      (edit) => !(edit.kind === 'relink' && edit.target_id === targetId),
    );
    this.queueEdit({
      stage: this.session.stage,
      kind: 'relink',
      target_id: targetId,
      payload: { actor_ids: actorIds },
    });
  }

  /** Submit the dirty buffer (if any), then confirm the gate. */
  async confirmStep(): Promise<void> {
    const session = this.session;
    if (!session) return;
    const label = STEP_STAGE_LABEL[this.activeStep];
    await this.guard(async () => {
      if (this.buffer.length > 0) {
        this.setSession(await this.api.applyEdits(session.id, this.buffer));
        this.buffer = []; // cleared only on successful submit
      }
      this.setSession(await this.api.confirm(session.id));
      if (label) this.timers.stop(label);
      this.activeStep = Math.min(this.activeStep + 1, this.maxStep());
    });
  }

  async generateDescriptions(usecaseIds: string[]): Promise<void> {
    const session = this.session;
    if (!session) return;
    await this.guard(async () => {
      this.timers.start('descriptions');
      this.setSession(await this.api.runStage(session.id, 'descriptions', usecaseIds));
      this.timers.stop('descriptions');
      this.activeStep = 4;
    });
  }

  skipDescriptions(): void {
    this.activeStep = Math.min(5, this.maxStep());
    this.render();
  }

  goToStep(step: number): void {
    this.activeStep = Math.max(0, Math.min(step, this.maxStep()));
    this.render();
  }

  // ---- export ----------------------------------------------------------------

  async exportPuml(): Promise<string | null> {
    const session = this.session;
    if (!session) return null;
    let text: string | null = null;
    await this.guard(async () => {
      text = await this.api.exportPuml(session.id);
      this.lastExportedPuml = text;
      this.download(`${session.id}.puml`, text, 'text/plain');
    });
    return text;
  }

  async exportSessionJson(): Promise<string | null> {
    const session = this.session;
    if (!session) return null;
    let text: string | null = null;
    await this.guard(async () => {
      const data = await this.api.exportJson(session.id);
      text = JSON.stringify(data, null, 2);
      this.download(`${session.id}.json`, text, 'application/json');
    });
    return text;
  }

  private download(filename: string, content: string, mime: string): void {
    this.downloadFn(filename, content, mime);
  }

  // ---- rendering ---------------------------------------------------------------

  private pendingRemovals(): Set<string> {
    return new Set(
      this.buffer.filter((e) => e.kind === 'remove' && e.target_id).map((e) => e.target_id as string),
    );
  }

  render(): void {
    const root = this.root;
    root.innerHTML = '';
    root.appendChild(this.renderHeader());
    if (this.banner) root.appendChild(this.renderBanner(this.banner));
    if (this.pending) {
      const busy = document.createElement('div');
      busy.className = 'pending-indicator';
      busy.setAttribute('data-testid', 'pending');
      busy.textContent = 'generating…';
      root.appendChild(busy);
    }
    const body = document.createElement('div');
    body.className = 'step-body';
    switch (this.activeStep) {
      case 0:
        body.appendChild(this.renderRequirementsScreen());
        break;
      case 1:
        body.appendChild(this.renderActorScreen());
        break;
      case 2:
        body.appendChild(this.renderUseCaseScreen());
        break;
      case 3:
        body.appendChild(this.renderModelScreen());
        break;
      case 4:
        body.appendChild(this.renderDescriptionScreen());
        break;
      default:
        body.appendChild(this.renderExportScreen());
    }
    root.appendChild(body);
  }

  private renderHeader(): HTMLElement {
    const header = document.createElement('nav');
    header.className = 'stepper-header';
    STEP_NAMES.forEach((name, index) => {
      const item = document.createElement('button');
      item.textContent = `${index + 1}. ${name}`;
      item.setAttribute('data-step', String(index));
      item.disabled = index > this.maxStep();
      item.className = index === this.activeStep ? 'step active' : 'step';
      item.addEventListener('click', () => this.goToStep(index));
      header.appendChild(item);
    });
    return header;
  }

  private renderBanner(banner: Banner): HTMLElement {
    const div = document.createElement('div');
    div.className = 'error-banner';
    div.setAttribute('data-testid', 'error-banner');
    const text = document.createElement('span');
    text.textContent = `${banner.code}: ${banner.message}`;
    div.appendChild(text);
    if (banner.retry) {
      const retry = document.createElement('button');
      retry.textContent = 'retry';
      retry.setAttribute('data-testid', 'retry');
      retry.addEventListener('click', () => void banner.retry!());
      div.appendChild(retry);
    }
    return div;
  }

  private renderRequirementsScreen(): HTMLElement {
    const panel = document.createElement('section');
    panel.innerHTML = `
      <h2>Requirements</h2>
      <input data-testid="title-input" placeholder="System name" />
      <textarea data-testid="requirements-input" rows="14" placeholder="Paste the requirements text"></textarea>
    `;
    const create = document.createElement('button');
    create.textContent = 'Create session';
    create.setAttribute('data-testid', 'create-session');
    create.addEventListener('click', () => {
      const title = (panel.querySelector('[data-testid=title-input]') as HTMLInputElement).value;
      const text = (
        panel.querySelector('[data-testid=requirements-input]') as HTMLTextAreaElement
      ).value;
      void this.createSession(title || 'System', text);
    });
    panel.appendChild(create);
    return panel;
  }

  private renderRunConfirmControls(panel: HTMLElement, hasProposal: boolean): void {
    const run = document.createElement('button');
    run.setAttribute('data-testid', 'run-stage');
    run.textContent = hasProposal ? 'Re-generate' : 'Generate';
    run.addEventListener('click', () => void this.runCurrentStage());
    panel.appendChild(run);
    if (hasProposal) {
      const confirm = document.createElement('button');
      confirm.setAttribute('data-testid', 'confirm');
      confirm.textContent = 'Confirm and continue';
      confirm.addEventListener('click', () => void this.confirmStep());
      panel.appendChild(confirm);
    }
  }

  private renderWarnings(panel: HTMLElement): void {
    const warnings = this.session?.warnings ?? [];
    if (!warnings.length) return;
    const list = document.createElement('ul');
    list.className = 'warnings';
    for (const warning of warnings) {
      const item = document.createElement('li');
      item.textContent = `${warning.code}: ${warning.message}`;
      list.appendChild(item);
    }
    panel.appendChild(list);
  }

  private renderActorScreen(): HTMLElement {
    const panel = document.createElement('section');
    panel.appendChild(Object.assign(document.createElement('h2'), { textContent: 'Actors' }));
    const session = this.session;
    const proposed = session
      ? session.stage === 'actors_proposed'
        ? session.proposed_actors
        : session.confirmed_actors
      : [];
    const removals = this.pendingRemovals();
    const list = document.createElement('ul');
    list.setAttribute('data-testid', 'actor-list');
    for (const actor of proposed) {
      const item = document.createElement('li');
      item.setAttribute('data-actor-id', actor.id);
      if (removals.has(actor.id)) item.className = 'pending-removal';

      const nameInput = document.createElement('input');
      nameInput.value = actor.name;
      nameInput.setAttribute('data-testid', `rename-${actor.id}`);
      nameInput.addEventListener('change', () => {
        if (nameInput.value !== actor.name) this.queueRename(actor.id, nameInput.value);
      });
      item.appendChild(nameInput);

      const kind = document.createElement('select');
      for (const option of ['human', 'external_system', 'hardware']) {
        const el = document.createElement('option');
        el.value = option;
        el.textContent = option;
        el.selected = option === actor.kind;
        kind.appendChild(el);
      }
      kind.disabled = true; // kind is fixed at extraction; re-add to change it
      item.appendChild(kind);

      const remove = document.createElement('button');
      remove.textContent = 'delete';
      remove.setAttribute('data-testid', `delete-${actor.id}`);
      remove.addEventListener('click', () => this.queueRemove(actor.id));
      item.appendChild(remove);
      list.appendChild(item);
    }
    panel.appendChild(list);

    const addName = document.createElement('input');
    addName.setAttribute('data-testid', 'add-actor-name');
    const addKind = document.createElement('select');
    addKind.setAttribute('data-testid', 'add-actor-kind');
    for (const option of ['human', 'external_system', 'hardware']) {
      const el = document.createElement('option');
      el.value = option;
      el.textContent = option;
      addKind.appendChild(el);
    }
    const add = document.createElement('button');
    add.textContent = 'add actor';
    add.setAttribute('data-testid', 'add-actor');
    add.addEventListener('click', () => {
      this.queueAddActor(addName.value, addKind.value as ActorKind);
      addName.value = '';
    });
    panel.append(addName, addKind, add);

    this.renderWarnings(panel);
    this.renderRunConfirmControls(
      panel,
      !!session && session.stage === 'actors_proposed',
    );
    return panel;
  }

  private renderUseCaseScreen(): HTMLElement {
    const panel = document.createElement('section');
    panel.appendChild(Object.assign(document.createElement('h2'), { textContent: 'Use cases' }));
    const session = this.session;
    const usecases = session
      ? session.stage === 'usecases_proposed'
        ? session.proposed_usecases
        : session.confirmed_usecases
      : [];
    const actorsById = new Map(
      (session?.confirmed_actors ?? []).map((actor) => [actor.id, actor.name]),
    );
    const removals = this.pendingRemovals();
    const list = document.createElement('ul');
    list.setAttribute('data-testid', 'usecase-list');
    for (const usecase of usecases) {
      const item = document.createElement('li');
      item.setAttribute('data-usecase-id', usecase.id);
      if (removals.has(usecase.id)) item.className = 'pending-removal';

      const titleInput = document.createElement('input');
      titleInput.value = usecase.title;
      titleInput.setAttribute('data-testid', `rename-${usecase.id}`);
      titleInput.addEventListener('change', () => {
        if (titleInput.value !== usecase.title) this.queueRename(usecase.id, titleInput.value);
      });
      item.appendChild(titleInput);

      for (const actorId of usecase.actor_ids) {
        const chip = document.createElement('span');
        chip.className = 'actor-chip';
        chip.textContent = actorsById.get(actorId) ?? actorId;
        item.appendChild(chip);
      }

      const remove = document.createElement('button');
      remove.textContent = 'delete';
      remove.setAttribute('data-testid', `delete-${usecase.id}`);
      remove.addEventListener('click', () => this.queueRemove(usecase.id));
      item.appendChild(remove);
      list.appendChild(item);
    }
    panel.appendChild(list);
    this.renderWarnings(panel);
    this.renderRunConfirmControls(
      panel,
      !!session && session.stage === 'usecases_proposed',
    );
    return panel;
  }

  private renderModelScreen(): HTMLElement {
    const panel = document.createElement('section');
    panel.appendChild(Object.assign(document.createElement('h2'), { textContent: 'Model' }));
    const session = this.session;
    if (session?.model_source) {
      const split = document.createElement('div');
      split.className = 'model-split';

      const source = document.createElement('pre');
      source.className = 'model-source';
      source.setAttribute('data-testid', 'model-source');
      source.textContent = session.model_source;
      split.appendChild(source);

      const previewHost = document.createElement('div');
      previewHost.setAttribute('data-testid', 'model-preview');
      if (session.model) {
        try {
          previewHost.appendChild(drawModelPreview(session.model));
        } catch (error) {
          if (error instanceof PreviewError) {
            const panelError = document.createElement('div');
            panelError.className = 'preview-error';
            panelError.textContent = error.message;
            previewHost.appendChild(panelError);
          } else {
            throw error;
          }
        }
      }
      split.appendChild(previewHost);
      panel.appendChild(split);
    }
    this.renderWarnings(panel);
    this.renderRunConfirmControls(panel, !!session && session.stage === 'model_proposed');
    return panel;
  }

  private renderDescriptionScreen(): HTMLElement {
    const panel = document.createElement('section');
    panel.appendChild(
      Object.assign(document.createElement('h2'), { textContent: 'Descriptions (optional)' }),
    );
    const session = this.session;
    const usecases = session?.model?.use_cases ?? [];
    const boxes: HTMLInputElement[] = [];
    const list = document.createElement('ul');
    for (const usecase of usecases) {
      const item = document.createElement('li');
      const box = document.createElement('input');
      box.type = 'checkbox';
      box.value = usecase.id;
      box.setAttribute('data-testid', `describe-${usecase.id}`);
      boxes.push(box);
      item.appendChild(box);
      item.appendChild(document.createTextNode(` ${usecase.title}`));
      list.appendChild(item);
    }
    panel.appendChild(list);

    const generate = document.createElement('button');
    generate.textContent = 'Generate descriptions';
    generate.setAttribute('data-testid', 'generate-descriptions');
    generate.addEventListener('click', () => {
      const ids = boxes.filter((b) => b.checked).map((b) => b.value);
      void this.generateDescriptions(ids);
    });
    panel.appendChild(generate);

    const skip = document.createElement('button');
    skip.textContent = 'Skip to export';
    skip.setAttribute('data-testid', 'skip-descriptions');
    skip.addEventListener('click', () => this.skipDescriptions());
    panel.appendChild(skip);

    for (const description of this.session?.descriptions ?? []) {
      const block = document.createElement('article');
      block.className = 'description';
      const title = usecases.find((u) => u.id === description.usecase_id)?.title;
      block.appendChild(
        Object.assign(document.createElement('h3'), {
          textContent: title ?? description.usecase_id,
        }),
      );
      const flow = document.createElement('ol');
      for (const step of description.main_flow) {
        flow.appendChild(Object.assign(document.createElement('li'), { textContent: step }));
      }
      block.appendChild(flow);
      panel.appendChild(block);
    }
    return panel;
  }

  private renderExportScreen(): HTMLElement {
    const panel = document.createElement('section');
    panel.appendChild(Object.assign(document.createElement('h2'), { textContent: 'Export' }));
    const puml = document.createElement('button');
    puml.textContent = 'Download .puml';
    puml.setAttribute('data-testid', 'export-puml');
    puml.addEventListener('click', () => void this.exportPuml());
    const json = document.createElement('button');
    json.textContent = 'Download session JSON';
    json.setAttribute('data-testid', 'export-json');
    json.addEventListener('click', () => void this.exportSessionJson());
    panel.append(puml, json);

    const timing = document.createElement('p');
    timing.className = 'timing-summary';
    timing.textContent = `modeling time so far: ${this.timers.totalMinutes().toFixed(2)} min`;
    panel.appendChild(timing);
    return panel;
  }
}
